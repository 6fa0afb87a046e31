//! Maximum-likelihood bit metrics. The receiver sees, per time instant, one
//! sample per subchannel; each coded-bit hypothesis is scored by the closest
//! transmit vector that carries it. The precoder's block structure lets the
//! search split into one joint search over the rotated block plus
//! independent scalar searches, with the same value as the full search.

use num_complex::Complex64;

use crate::coding::{BitMetricTable, CodeSpec};
use crate::error::{Error, Result};
use crate::modem::{Constellation, Modem};
use crate::numerics::CMatrix;
use crate::precoding::PrecoderConfig;

/// One instant's received samples in precoded-first order: `r_p` from the
/// precoded subchannels (in `bp` order), `r_n` from the rest (in `bn`
/// order). `k` is the 1-based time instant within the frame.
#[derive(Debug, Clone)]
pub struct ReceivedVector {
    r_p: Vec<Complex64>,
    r_n: Vec<Complex64>,
    k: usize,
}

impl ReceivedVector {
    pub fn new(r_p: Vec<Complex64>, r_n: Vec<Complex64>, k: usize) -> Result<Self> {
        if r_p
            .iter()
            .chain(r_n.iter())
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidInput("non-finite received sample".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInput("time instants are 1-based".into()));
        }
        Ok(Self { r_p, r_n, k })
    }

    pub fn r_p(&self) -> &[Complex64] {
        &self.r_p
    }

    pub fn r_n(&self) -> &[Complex64] {
        &self.r_n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.r_p.len() + self.r_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample at precoded-first position `l` (1-based).
    pub fn at(&self, l: usize) -> Complex64 {
        if l <= self.r_p.len() {
            self.r_p[l - 1]
        } else {
            self.r_n[l - 1 - self.r_p.len()]
        }
    }
}

/// ‖r − diag(gains)·Θ·x‖² over one block.
fn block_distance(r: &[Complex64], gains: &[f64], theta: &CMatrix, x: &[Complex64]) -> f64 {
    let p = x.len();
    let mut acc = 0.0;
    for row in 0..p {
        let mut y = Complex64::new(0.0, 0.0);
        for col in 0..p {
            y += theta[(row, col)] * x[col];
        }
        let diff = r[row] - gains[row] * y;
        acc += diff.norm_sqr();
    }
    acc
}

/// |r − λx|² for one scalar subchannel.
fn scalar_distance(r: Complex64, lambda: f64, x: Complex64) -> f64 {
    (r - lambda * x).norm_sqr()
}

/// Minimum block distance over all label choices, with coordinate
/// `restrict` (0-based, or None) confined to the given labels.
fn block_min(
    r: &[Complex64],
    gains: &[f64],
    theta: &CMatrix,
    c: &Constellation,
    restrict: Option<(usize, &[usize])>,
) -> f64 {
    let p = r.len();
    if p == 0 {
        return 0.0;
    }
    let full: Vec<usize> = (0..c.size()).collect();
    let alphabet_of = |coord: usize| -> &[usize] {
        match restrict {
            Some((rc, labels)) if rc == coord => labels,
            _ => &full,
        }
    };
    let mut idx = vec![0usize; p];
    let mut x = vec![Complex64::new(0.0, 0.0); p];
    for coord in 0..p {
        x[coord] = c.point(alphabet_of(coord)[0]);
    }
    let mut best = f64::INFINITY;
    loop {
        let d = block_distance(r, gains, theta, &x);
        if d < best {
            best = d;
        }
        let mut coord = 0;
        loop {
            let alphabet = alphabet_of(coord);
            idx[coord] += 1;
            if idx[coord] < alphabet.len() {
                x[coord] = c.point(alphabet[idx[coord]]);
                break;
            }
            idx[coord] = 0;
            x[coord] = c.point(alphabet[0]);
            coord += 1;
            if coord == p {
                return best;
            }
        }
    }
}

/// Minimum scalar distance with the label confined to `labels`.
fn scalar_min(r: Complex64, lambda: f64, c: &Constellation, labels: &[usize]) -> f64 {
    labels
        .iter()
        .map(|&l| scalar_distance(r, lambda, c.point(l)))
        .fold(f64::INFINITY, f64::min)
}

/// Exact ML bit metric by exhaustive search over every transmit vector:
/// the minimum of ‖r − ΓΘx‖² with coordinate `l` restricted to symbols
/// whose bit `i` equals `b`. `gains` and `theta` are in precoded-first
/// order; `l`, `i` are 1-based.
pub fn bit_metric_general(
    r: &ReceivedVector,
    gains: &[f64],
    theta: &CMatrix,
    c: &Constellation,
    l: usize,
    i: usize,
    b: u8,
) -> f64 {
    let s = gains.len();
    assert!(l >= 1 && l <= s, "position {l} outside 1..={s}");
    assert!(i >= 1 && i <= c.bits(), "bit index {i} out of range");
    assert_eq!(r.len(), s);
    assert_eq!(theta.rows(), s);
    assert_eq!(theta.cols(), s);
    let r_full: Vec<Complex64> = (1..=s).map(|u| r.at(u)).collect();
    block_min(
        &r_full,
        gains,
        theta,
        c,
        Some((l - 1, c.subset(i, b))),
    )
}

/// Same value as `bit_metric_general`, computed through the precoder's block
/// structure: the rotated block is searched jointly, every other subchannel
/// independently. The hypothesis only restricts its own block; the remaining
/// blocks contribute their unrestricted minima, so the total still equals
/// the full search.
pub fn bit_metric_partial(
    r: &ReceivedVector,
    cfg: &PrecoderConfig,
    gains: &[f64],
    c: &Constellation,
    l: usize,
    i: usize,
    b: u8,
) -> f64 {
    let s = cfg.s();
    let p = cfg.p();
    assert!(l >= 1 && l <= s, "position {l} outside 1..={s}");
    assert!(i >= 1 && i <= c.bits(), "bit index {i} out of range");
    assert_eq!(gains.len(), s);
    assert_eq!(r.r_p().len(), p);
    assert_eq!(r.r_n().len(), s - p);
    let labels = c.subset(i, b);
    let full: Vec<usize> = (0..c.size()).collect();

    let mut total = if p == 0 {
        0.0
    } else if l <= p {
        block_min(
            r.r_p(),
            &gains[..p],
            cfg.theta_tilde(),
            c,
            Some((l - 1, labels)),
        )
    } else {
        block_min(r.r_p(), &gains[..p], cfg.theta_tilde(), c, None)
    };
    for v in 0..(s - p) {
        let restricted = l > p && v == l - p - 1;
        total += scalar_min(
            r.r_n()[v],
            gains[p + v],
            c,
            if restricted { labels } else { &full },
        );
    }
    total
}

/// All bit metrics of one time instant, computed once. Block and scalar
/// distances are evaluated a single time and reduced per hypothesis, giving
/// bit-identical values to `bit_metric_partial`.
#[derive(Debug, Clone)]
pub struct InstantMetrics {
    s: usize,
    p: usize,
    m: usize,
    /// Restricted block minima, indexed ((l−1)·m + (i−1))·2 + b for l ≤ P.
    block_restricted: Vec<f64>,
    block_free: f64,
    /// Restricted scalar minima, indexed ((v·m) + (i−1))·2 + b for the v-th
    /// non-precoded position.
    scalar_restricted: Vec<f64>,
    scalar_free: Vec<f64>,
}

impl InstantMetrics {
    pub fn new(
        r: &ReceivedVector,
        cfg: &PrecoderConfig,
        gains: &[f64],
        c: &Constellation,
    ) -> Result<Self> {
        let s = cfg.s();
        let p = cfg.p();
        let m = c.bits();
        if gains.len() != s || r.r_p().len() != p || r.r_n().len() != s - p {
            return Err(Error::InvalidInput(
                "received vector does not match the precoder shape".into(),
            ));
        }

        // Every block distance once, then per-subset minima.
        let mut block_restricted = vec![f64::INFINITY; p * m * 2];
        let mut block_free = 0.0;
        if p > 0 {
            let size = c.size();
            let combos = size.pow(p as u32);
            let mut dist = vec![0.0f64; combos];
            let mut labels = vec![0usize; p];
            let mut x = vec![c.point(0); p];
            for (combo, d) in dist.iter_mut().enumerate() {
                *d = block_distance(r.r_p(), &gains[..p], cfg.theta_tilde(), &x);
                // Odometer in the same coordinate order as the search path.
                let mut coord = 0;
                if combo + 1 < combos {
                    loop {
                        labels[coord] += 1;
                        if labels[coord] < size {
                            x[coord] = c.point(labels[coord]);
                            break;
                        }
                        labels[coord] = 0;
                        x[coord] = c.point(0);
                        coord += 1;
                    }
                }
            }
            block_free = dist.iter().copied().fold(f64::INFINITY, f64::min);
            // combo encodes coordinate l's label in base-`size` digit l−1.
            let digit = |combo: usize, coord: usize| (combo / size.pow(coord as u32)) % size;
            for l in 1..=p {
                for i in 1..=m {
                    for b in 0..2u8 {
                        let set = c.subset(i, b);
                        let best = dist
                            .iter()
                            .enumerate()
                            .filter(|(combo, _)| set.contains(&digit(*combo, l - 1)))
                            .map(|(_, &d)| d)
                            .fold(f64::INFINITY, f64::min);
                        block_restricted[((l - 1) * m + (i - 1)) * 2 + b as usize] = best;
                    }
                }
            }
        }

        let mut scalar_restricted = vec![f64::INFINITY; (s - p) * m * 2];
        let mut scalar_free = vec![f64::INFINITY; s - p];
        for v in 0..(s - p) {
            let dists: Vec<f64> = (0..c.size())
                .map(|label| scalar_distance(r.r_n()[v], gains[p + v], c.point(label)))
                .collect();
            scalar_free[v] = dists.iter().copied().fold(f64::INFINITY, f64::min);
            for i in 1..=m {
                for b in 0..2u8 {
                    let best = c
                        .subset(i, b)
                        .iter()
                        .map(|&label| dists[label])
                        .fold(f64::INFINITY, f64::min);
                    scalar_restricted[(v * m + (i - 1)) * 2 + b as usize] = best;
                }
            }
        }

        Ok(Self {
            s,
            p,
            m,
            block_restricted,
            block_free,
            scalar_restricted,
            scalar_free,
        })
    }

    /// Metric for bit `i` of the symbol at precoded-first position `l`
    /// equal to `b`.
    pub fn metric(&self, l: usize, i: usize, b: u8) -> f64 {
        assert!(l >= 1 && l <= self.s);
        assert!(i >= 1 && i <= self.m);
        let mut total = if self.p == 0 {
            0.0
        } else if l <= self.p {
            self.block_restricted[((l - 1) * self.m + (i - 1)) * 2 + b as usize]
        } else {
            self.block_free
        };
        for v in 0..(self.s - self.p) {
            total += if l > self.p && v == l - self.p - 1 {
                self.scalar_restricted[(v * self.m + (i - 1)) * 2 + b as usize]
            } else {
                self.scalar_free[v]
            };
        }
        total
    }
}

/// Scores one frame's received samples into the decoder's metric table.
/// `received` and `gains` hold one entry per time instant (the gains repeat
/// within a quasi-static block). Coded bit u is scored at the position its
/// stream feeds, under both bit hypotheses.
pub fn build_metric_table(
    spec: &CodeSpec,
    modem: &Modem,
    cfg: &PrecoderConfig,
    received: &[ReceivedVector],
    gains: &[Vec<f64>],
) -> Result<BitMetricTable> {
    if modem.spatial().streams() != cfg.s() {
        return Err(Error::Contract(format!(
            "{} spatial streams vs {} precoder streams",
            modem.spatial().streams(),
            cfg.s()
        )));
    }
    if received.len() != modem.instants() || gains.len() != modem.instants() {
        return Err(Error::Contract(format!(
            "{} received instants and {} gain sets for a {}-instant frame",
            received.len(),
            gains.len(),
            modem.instants()
        )));
    }
    let instant_metrics: Vec<InstantMetrics> = received
        .iter()
        .zip(gains)
        .map(|(r, g)| InstantMetrics::new(r, cfg, g, modem.constellation()))
        .collect::<Result<_>>()?;

    let mut pairs = Vec::with_capacity(modem.coded_len());
    for u in 1..=modem.coded_len() {
        let slot = modem.locate(u)?;
        let l = cfg.position_of_subchannel(slot.s);
        let im = &instant_metrics[slot.k - 1];
        pairs.push((im.metric(l, slot.i, 0), im.metric(l, slot.i, 1)));
    }
    BitMetricTable::from_punctured(spec, pairs)
}
