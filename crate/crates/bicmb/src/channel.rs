//! Quasi-static flat-fading channel draws and the beamforming decomposition
//! that turns the antenna array into parallel scalar subchannels.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{svd, CMatrix, RngStream};

/// One channel draw together with its beamforming factors. `h` is rx-by-tx;
/// `u_tilde` and `v_tilde` hold the first `s` left and right singular
/// vectors, and `lambdas` the matching singular values, sorted
/// non-increasing.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub u_tilde: CMatrix,
    pub v_tilde: CMatrix,
    pub lambdas: Vec<f64>,
}

impl ChannelRealization {
    pub fn n_tx(&self) -> usize {
        self.h.cols()
    }

    pub fn n_rx(&self) -> usize {
        self.h.rows()
    }

    pub fn n_streams(&self) -> usize {
        self.lambdas.len()
    }

    /// Largest deviation of `u_tilde^H H v_tilde` from `diag(lambdas)`.
    pub fn decomposition_residual(&self) -> f64 {
        let eff = self.u_tilde.hermitian().mul(&self.h).mul(&self.v_tilde);
        let s = self.lambdas.len();
        let mut worst = 0.0f64;
        for r in 0..s {
            for c in 0..s {
                let expect = if r == c {
                    Complex64::new(self.lambdas[r], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                worst = worst.max((eff[(r, c)] - expect).norm());
            }
        }
        worst
    }
}

/// Draws an i.i.d. unit-variance complex Gaussian `m`-by-`n` channel and
/// decomposes it for `s` spatial streams.
pub fn draw_channel(
    rng: &mut RngStream,
    n_tx: usize,
    n_rx: usize,
    s: usize,
) -> Result<ChannelRealization> {
    if s == 0 || s > n_tx.min(n_rx) {
        return Err(Error::Config(format!(
            "{s} streams do not fit a {n_rx}x{n_tx} channel"
        )));
    }
    let entries = crate::numerics::gaussian_complex(rng, n_rx * n_tx);
    let h = CMatrix::new(n_rx, n_tx, entries)?;
    let dec = svd(&h)?;
    let u_tilde = dec.u.take_cols(s);
    let v_tilde = dec.v.take_cols(s);
    let lambdas = dec.sigma[..s].to_vec();
    let ch = ChannelRealization {
        h,
        u_tilde,
        v_tilde,
        lambdas,
    };
    let resid = ch.decomposition_residual();
    if resid > 1e-8 {
        return Err(Error::Contract(format!(
            "beamforming residual {resid:.3e} exceeds 1e-8"
        )));
    }
    Ok(ch)
}

/// Checks that `bp` and `bn`, each strictly increasing, partition
/// `1..=s_total`.
pub fn validate_partition(bp: &[usize], bn: &[usize], s_total: usize) -> Result<()> {
    if bp.len() + bn.len() != s_total {
        return Err(Error::Config(format!(
            "{} + {} subchannel indices for {} streams",
            bp.len(),
            bn.len(),
            s_total
        )));
    }
    for (name, list) in [("precoded", bp), ("non-precoded", bn)] {
        if list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "{name} subchannel list must be strictly increasing"
            )));
        }
    }
    let mut seen = vec![false; s_total];
    for &idx in bp.iter().chain(bn.iter()) {
        if idx == 0 || idx > s_total {
            return Err(Error::Config(format!(
                "subchannel {idx} outside 1..={s_total}"
            )));
        }
        if seen[idx - 1] {
            return Err(Error::Config(format!("subchannel {idx} listed twice")));
        }
        seen[idx - 1] = true;
    }
    Ok(())
}

/// Subchannel gains in detector order: the precoded group first (in `bp`
/// order), then the rest (in `bn` order).
pub fn effective_gains(ch: &ChannelRealization, bp: &[usize], bn: &[usize]) -> Result<Vec<f64>> {
    validate_partition(bp, bn, ch.n_streams())?;
    Ok(bp
        .iter()
        .chain(bn.iter())
        .map(|&idx| ch.lambdas[idx - 1])
        .collect())
}
