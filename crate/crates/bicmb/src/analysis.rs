//! Analytical diversity prediction. Error events of the convolutional code
//! are enumerated on the trellis augmented with the spatial interleaver
//! phase, aggregated into per-stream error counts, and pushed through the
//! subchannel-ordering rule that decides which diversity order each event
//! can extract. A Monte Carlo check of the underlying pairwise-error bound
//! and a curve-slope estimator close the loop against simulation.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::coding::{free_distance, CodeSpec};
use crate::error::{Error, Result};
use crate::modem::SpatialInterleaver;
use crate::numerics::{gaussian_complex, svd, CMatrix, RngStream};

/// Per-stream count of erroneous bits in one error event class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AlphaVector {
    pub alpha: Vec<u32>,
    pub d_h: u32,
}

impl AlphaVector {
    pub fn new(alpha: Vec<u32>) -> Result<Self> {
        let d_h = alpha.iter().sum();
        if alpha.is_empty() || d_h == 0 {
            return Err(Error::InvalidInput(
                "an error event touches at least one stream".into(),
            ));
        }
        Ok(Self { alpha, d_h })
    }

    pub fn streams(&self) -> usize {
        self.alpha.len()
    }
}

/// Weight added by default on top of the free distance when no explicit
/// enumeration bound is given.
pub const DEFAULT_WEIGHT_MARGIN: u32 = 4;

struct EventSearch<'a> {
    spec: &'a CodeSpec,
    il: &'a SpatialInterleaver,
    max_weight: u32,
    depth_limit: usize,
    punct_period: usize,
    events: BTreeMap<Vec<u32>, u64>,
    out: Vec<u8>,
}

impl EventSearch<'_> {
    /// Surviving output count of one trellis step at puncture phase `pp`.
    fn survivors(&self, pp: usize) -> usize {
        match self.spec.puncture_ref() {
            None => self.spec.n_outputs(),
            Some(p) => (0..p.n_rows()).filter(|&r| p.keeps(r, pp)).count(),
        }
    }

    fn keeps(&self, row: usize, pp: usize) -> bool {
        match self.spec.puncture_ref() {
            None => true,
            Some(p) => p.keeps(row, pp),
        }
    }

    /// Extends the current path by `bit` from `state`, accounting every
    /// surviving 1-bit to the stream it lands on. Recurses until remerge or
    /// the weight bound cuts the branch.
    fn extend(
        &mut self,
        state: u32,
        bit: u8,
        il_phase: usize,
        pp: usize,
        alpha: &mut Vec<u32>,
        weight: u32,
        depth: usize,
    ) -> Result<()> {
        if depth > self.depth_limit {
            return Err(Error::BoundExceeded(format!(
                "error event exceeds {} trellis steps at weight <= {}; \
                 the code likely has a zero-weight loop",
                self.depth_limit, self.max_weight
            )));
        }
        self.out.clear();
        let mut out = std::mem::take(&mut self.out);
        let next = self.spec.step(state, bit, &mut out);
        let mut weight = weight;
        let mut il_phase = il_phase;
        let mut touched = Vec::new();
        for (row, &o) in out.iter().enumerate() {
            if !self.keeps(row, pp) {
                continue;
            }
            if o == 1 {
                let s = self.il.stream_at_phase(il_phase);
                alpha[s - 1] += 1;
                touched.push(s - 1);
                weight += 1;
            }
            il_phase = (il_phase + 1) % self.il.period();
        }
        self.out = out;
        let pp_next = (pp + 1) % self.punct_period;

        if weight <= self.max_weight {
            if next == 0 {
                *self.events.entry(alpha.clone()).or_insert(0) += 1;
            } else {
                for next_bit in [0u8, 1] {
                    self.extend(next, next_bit, il_phase, pp_next, alpha, weight, depth + 1)?;
                }
            }
        }
        for &s in &touched {
            alpha[s] -= 1;
        }
        Ok(())
    }
}

/// Enumerates every error event of serialized weight at most `max_weight`,
/// from every interleaver phase an event can start at, and aggregates them
/// into per-stream count vectors with event multiplicities. Events start at
/// trellis-step boundaries, so the reachable phases are the orbit of phase
/// zero under the per-step advance.
pub fn enumerate_alpha(
    spec: &CodeSpec,
    il: &SpatialInterleaver,
    max_weight: u32,
) -> Result<Vec<(AlphaVector, u64)>> {
    il.validate()?;
    let punct_period = spec.puncture_ref().map_or(1, |p| p.period());
    let nu = spec.memory();
    let depth_limit = (1usize << nu) * (max_weight as usize + 2) + nu + 2;
    let mut search = EventSearch {
        spec,
        il,
        max_weight,
        depth_limit,
        punct_period,
        events: BTreeMap::new(),
        out: Vec::with_capacity(spec.n_outputs()),
    };

    // Starting phases: walk whole steps from (0, 0) until the pair cycles.
    let mut starts = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let (mut il_phase, mut pp) = (0usize, 0usize);
    while seen.insert((il_phase, pp)) {
        starts.push((il_phase, pp));
        il_phase = (il_phase + search.survivors(pp)) % il.period();
        pp = (pp + 1) % punct_period;
    }

    let mut alpha = vec![0u32; il.streams()];
    for &(start_il, start_pp) in &starts {
        // An event begins by leaving the zero state on a 1 input.
        search.extend(0, 1, start_il, start_pp, &mut alpha, 0, 0)?;
    }
    debug_assert!(alpha.iter().all(|&a| a == 0));

    if search.events.is_empty() {
        return Err(Error::NoEvents { max_weight });
    }
    let mut rows: Vec<(AlphaVector, u64)> = search
        .events
        .into_iter()
        .map(|(alpha, count)| (AlphaVector::new(alpha).expect("events are nonempty"), count))
        .collect();
    rows.sort_by(|a, b| (a.0.d_h, &a.0.alpha).cmp(&(b.0.d_h, &b.0.alpha)));
    Ok(rows)
}

/// The subchannel-ordering exponent of one event. With errors on a precoded
/// subchannel the event is tied to the strongest precoded one, `bp(1)`, or
/// to an even stronger non-precoded subchannel carrying errors; otherwise
/// only the weakest erroneous non-precoded subchannel counts.
pub fn delta_of(av: &AlphaVector, bp: &[usize], bn: &[usize]) -> Result<usize> {
    let s = av.streams();
    crate::channel::validate_partition(bp, bn, s)?;
    let d_hp: u32 = bp.iter().map(|&idx| av.alpha[idx - 1]).sum();
    let delta_n = bn
        .iter()
        .copied()
        .filter(|&idx| av.alpha[idx - 1] > 0)
        .min();
    if d_hp > 0 {
        Ok(match delta_n {
            Some(dn) => bp[0].min(dn),
            None => bp[0],
        })
    } else {
        delta_n.ok_or_else(|| {
            Error::Contract("event with no erroneous bits on any subchannel".into())
        })
    }
}

/// One enumerated event class scored against a precoder split.
#[derive(Debug, Clone)]
pub struct DiversityRow {
    pub alpha: Vec<u32>,
    pub count: u64,
    pub d_h: u32,
    pub d_hp: u32,
    pub d_hn: u32,
    pub delta: usize,
    pub order: usize,
}

/// Diversity prediction for one (code, interleaver, precoder split) triple.
#[derive(Debug, Clone)]
pub struct DiversityReport {
    pub n: usize,
    pub m: usize,
    pub bp: Vec<usize>,
    pub bn: Vec<usize>,
    pub max_weight: u32,
    pub rows: Vec<DiversityRow>,
    pub overall_order: usize,
    /// Overall order equals the full array gain N·M.
    pub full: bool,
    /// Every nonempty stream subset appeared as some event's support, so no
    /// heavier event can introduce a new exponent. Otherwise the overall
    /// order is exact only up to `max_weight`.
    pub exact: bool,
}

impl DiversityReport {
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "diversity over {}x{} antennas, precoded {:?}, events to weight {}",
            self.n, self.m, self.bp, self.max_weight
        );
        let _ = writeln!(s, "{:<16} {:>6} {:>5} {:>5} {:>5} {:>6} {:>6}",
            "alpha", "count", "d_h", "d_Hp", "d_Hn", "delta", "order");
        for r in &self.rows {
            let alpha = r
                .alpha
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>5} {:>5} {:>5} {:>6} {:>6}",
                format!("({alpha})"),
                r.count,
                r.d_h,
                r.d_hp,
                r.d_hn,
                r.delta,
                r.order
            );
        }
        let _ = writeln!(
            s,
            "overall order {}{}{}",
            self.overall_order,
            if self.full { " (full)" } else { "" },
            if self.exact {
                ""
            } else {
                " (exact up to the weight bound)"
            }
        );
        s
    }
}

/// Predicts the diversity order of a configuration: enumerate events, score
/// each with the ordering rule, take the worst exponent. `max_weight`
/// defaults to the free distance plus `DEFAULT_WEIGHT_MARGIN`.
pub fn diversity_order(
    spec: &CodeSpec,
    il: &SpatialInterleaver,
    bp: &[usize],
    n: usize,
    m: usize,
    max_weight: Option<u32>,
) -> Result<DiversityReport> {
    let s = il.streams();
    if s > n.min(m) {
        return Err(Error::Config(format!(
            "{s} streams do not fit {n}x{m} antennas"
        )));
    }
    let bn: Vec<usize> = (1..=s).filter(|i| !bp.contains(i)).collect();
    crate::channel::validate_partition(bp, &bn, s)?;
    let max_weight = match max_weight {
        Some(w) => w,
        None => free_distance(spec)? + DEFAULT_WEIGHT_MARGIN,
    };
    let events = enumerate_alpha(spec, il, max_weight)?;

    let mut rows = Vec::with_capacity(events.len());
    let mut supports = std::collections::HashSet::new();
    let mut overall = usize::MAX;
    for (av, count) in events {
        let d_hp: u32 = bp.iter().map(|&i| av.alpha[i - 1]).sum();
        let delta = delta_of(&av, bp, &bn)?;
        let order = (n - delta + 1) * (m - delta + 1);
        overall = overall.min(order);
        let support: Vec<usize> = (1..=s).filter(|&i| av.alpha[i - 1] > 0).collect();
        supports.insert(support);
        rows.push(DiversityRow {
            d_hn: av.d_h - d_hp,
            d_hp,
            d_h: av.d_h,
            alpha: av.alpha,
            count,
            delta,
            order,
        });
    }
    let exact = supports.len() == (1usize << s) - 1;
    Ok(DiversityReport {
        n,
        m,
        bp: bp.to_vec(),
        bn,
        max_weight,
        rows,
        overall_order: overall,
        full: overall == n * m,
        exact,
    })
}

/// Best diversity order reachable without precoding, over all interleavers:
/// (N−⌈S·Rc⌉+1)(M−⌈S·Rc⌉+1).
pub fn bicmb_bound(n: usize, m: usize, s: usize, rc: f64) -> Result<usize> {
    if !(rc > 0.0 && rc <= 1.0) {
        return Err(Error::InvalidInput(format!("code rate {rc} outside (0, 1]")));
    }
    if s == 0 || s > n.min(m) {
        return Err(Error::InvalidInput(format!(
            "{s} streams do not fit {n}x{m} antennas"
        )));
    }
    // Tolerant ceiling: rates like 2/3 arrive through floating point.
    let k = (s as f64 * rc - 1e-9).ceil() as usize;
    let k = k.max(1);
    Ok((n - k + 1) * (m - k + 1))
}

/// One Monte Carlo check of the pairwise-error bound's exponent.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub delta: usize,
    pub target_order: usize,
    /// (γ, estimate, standard error) per grid point.
    pub points: Vec<(f64, f64, f64)>,
    pub fitted_order: f64,
    pub meets_bound: bool,
}

/// Estimates E[exp(−γ Σ φ_s μ_s)] over channel draws at each γ and fits the
/// decay exponent, which must reach (N−δ+1)(M−δ+1) within `tol`, δ being the
/// first nonzero position of φ.
///
/// When every weight is positive and φ covers all min(N,M) eigenvalues, the
/// draw is importance-sampled from a scaled Gaussian (zero variance in the
/// equal-weight case); otherwise the unweighted eigenvalue directions would
/// blow the tilted weights up, so the plain estimator is used — adequate
/// there because the decay is polynomially slower.
pub fn theorem1_check(
    n: usize,
    m: usize,
    phi: &[f64],
    gammas: &[f64],
    trials: u64,
    seed: u64,
    tol: f64,
) -> Result<Theorem1Report> {
    let s = phi.len();
    if s == 0 || s > n.min(m) {
        return Err(Error::InvalidInput(format!(
            "{s} weights do not fit {n}x{m} antennas"
        )));
    }
    if phi.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidInput("weights must be non-negative".into()));
    }
    let delta = match phi.iter().position(|&p| p > 0.0) {
        Some(i) => i + 1,
        None => return Err(Error::InvalidInput("all weights are zero".into())),
    };
    if gammas.len() < 3 || gammas.iter().any(|&g| g <= 0.0) {
        return Err(Error::InvalidInput(
            "need at least 3 positive gamma points".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("no trials".into()));
    }
    let target_order = (n - delta + 1) * (m - delta + 1);
    let tilted = s == n.min(m) && phi.iter().all(|&p| p > 0.0);
    let phi_min = phi.iter().cloned().fold(f64::INFINITY, f64::min);

    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let mut points = Vec::with_capacity(gammas.len());
    for (g_idx, &gamma) in gammas.iter().enumerate() {
        let sigma2 = if tilted { 1.0 / (1.0 + gamma * phi_min) } else { 1.0 };
        let log_weight_scale = (m * n) as f64 * sigma2.ln();
        let partials: Vec<(f64, f64, u64)> = (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut rng =
                    RngStream::new(seed, ((g_idx as u64) << 40) | chunk);
                let count = CHUNK.min(trials - chunk * CHUNK);
                let (mut acc, mut acc2) = (0.0f64, 0.0f64);
                for _ in 0..count {
                    let entries = gaussian_complex(&mut rng, m * n);
                    let frob: f64 = entries.iter().map(|z| z.norm_sqr()).sum();
                    let h = CMatrix::new(m, n, entries).expect("finite draw");
                    let dec = svd(&h).expect("svd of a random draw");
                    let weighted: f64 = dec.sigma[..s]
                        .iter()
                        .zip(phi)
                        .map(|(&sg, &p)| p * sg * sg)
                        .sum();
                    // With H = σG the target-to-proposal density ratio is
                    // σ^{2MN}·exp((1−σ²)‖G‖²), and the integrand sees σ²μ.
                    let v = if tilted {
                        (log_weight_scale + (1.0 - sigma2) * frob
                            - gamma * sigma2 * weighted)
                            .exp()
                    } else {
                        (-gamma * weighted).exp()
                    };
                    acc += v;
                    acc2 += v * v;
                }
                (acc, acc2, count)
            })
            .collect();
        let (mut sum, mut sum2, mut total) = (0.0, 0.0, 0u64);
        for (a, a2, c) in partials {
            sum += a;
            sum2 += a2;
            total += c;
        }
        let mean = sum / total as f64;
        let var = (sum2 / total as f64 - mean * mean).max(0.0);
        let std_err = (var / total as f64).sqrt();
        if mean <= 0.0 {
            return Err(Error::Window(format!(
                "estimate vanished at gamma = {gamma:.3e}; increase trials"
            )));
        }
        points.push((gamma, mean, std_err));
    }

    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(g, e, _)| (g.log10(), e.log10()))
        .collect();
    let fitted_order = -least_squares_slope(&xy);
    Ok(Theorem1Report {
        delta,
        target_order,
        points,
        fitted_order,
        meets_bound: fitted_order >= target_order as f64 - tol,
    })
}

fn least_squares_slope(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    cov / var
}

/// Diversity estimate from a simulated BER curve: −10 times the
/// least-squares slope of log10(BER) against SNR in dB. The caller selects
/// the high-SNR window.
pub fn estimate_slope(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 3 {
        return Err(Error::Window(format!(
            "{} points are too few to fit a slope; need 3",
            curve.len()
        )));
    }
    if let Some(&(snr, ber)) = curve.iter().find(|&&(_, ber)| !(ber > 0.0)) {
        return Err(Error::Window(format!(
            "BER {ber:.3e} at {snr} dB cannot be fitted; simulate more bits"
        )));
    }
    let xy: Vec<(f64, f64)> = curve
        .iter()
        .map(|&(snr_db, ber)| (snr_db, ber.log10()))
        .collect();
    Ok(-10.0 * least_squares_slope(&xy))
}
