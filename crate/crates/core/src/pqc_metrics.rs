//! Expressibility and entangling capacity of parameterized circuits.
//!
//! Every sample draws its angles uniformly from `[0, 2π)` using its own
//! ChaCha stream (`seed`, sample index), so results do not depend on the
//! thread count.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::sim::{Mat2, StateVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressibilityReport {
    pub kl_divergence: f64,
    pub num_samples: usize,
    pub num_bins: usize,
    pub seed: u64,
    /// The circuit has no parameters: every fidelity is 1.
    pub untrainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglingCapacityReport {
    pub mean_q: f64,
    pub num_samples: usize,
    pub seed: u64,
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn random_state<R: Rng>(circuit: &Circuit, rng: &mut R) -> Result<StateVector> {
    let params: Vec<f64> = (0..circuit.num_params())
        .map(|_| rng.random_range(0.0..TAU))
        .collect();
    let mut state = StateVector::zero(circuit.num_qubits())?;
    circuit.bind(&params)?.run(&mut state)?;
    Ok(state)
}

/// Probability mass the Haar fidelity density `(N-1)(1-F)^(N-2)` puts on
/// each of `num_bins` equal bins of `[0, 1]`.
pub fn haar_bin_probabilities(num_qubits: usize, num_bins: usize) -> Vec<f64> {
    let power = (1u64 << num_qubits) as i32 - 1;
    let cdf_tail = |f: f64| (1.0 - f).powi(power);
    (0..num_bins)
        .map(|i| {
            let lo = i as f64 / num_bins as f64;
            let hi = (i + 1) as f64 / num_bins as f64;
            cdf_tail(lo) - cdf_tail(hi)
        })
        .collect()
}

/// Bin index of a fidelity in `[0, 1]`; `F = 1` falls in the last bin.
fn bin_of(f: f64, num_bins: usize) -> usize {
    ((f * num_bins as f64) as usize).min(num_bins - 1)
}

/// Sampled fidelities `|<ψ(θ)|ψ(φ)>|^2` of `num_samples` independent pairs.
pub fn sample_fidelities(circuit: &Circuit, num_samples: usize, seed: u64) -> Result<Vec<f64>> {
    (0..num_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let a = random_state(circuit, &mut rng)?;
            let b = random_state(circuit, &mut rng)?;
            Ok(a.inner(&b).norm_sqr().clamp(0.0, 1.0))
        })
        .collect()
}

/// KL divergence of the sampled fidelity histogram from the Haar one.
pub fn expressibility(
    circuit: &Circuit,
    num_samples: usize,
    num_bins: usize,
    seed: u64,
) -> Result<ExpressibilityReport> {
    if num_bins < 2 {
        return Err(Error::DegenerateBins(format!(
            "need at least 2 bins, got {num_bins}"
        )));
    }
    if num_samples == 0 {
        return Err(Error::DegenerateBins("no samples".into()));
    }
    let mut counts = vec![0usize; num_bins];
    for f in sample_fidelities(circuit, num_samples, seed)? {
        counts[bin_of(f, num_bins)] += 1;
    }
    let haar = haar_bin_probabilities(circuit.num_qubits(), num_bins);
    let mut kl = 0.0;
    for (&c, &q) in counts.iter().zip(&haar) {
        if c == 0 {
            continue;
        }
        if q <= 0.0 {
            return Err(Error::DegenerateBins(
                "a sampled bin has zero Haar probability; use fewer bins".into(),
            ));
        }
        let p = c as f64 / num_samples as f64;
        kl += p * (p / q).ln();
    }
    Ok(ExpressibilityReport {
        kl_divergence: kl.max(0.0),
        num_samples,
        num_bins,
        seed,
        untrainable: circuit.num_params() == 0,
    })
}

fn purity2(rho: &Mat2) -> f64 {
    rho.iter().flatten().map(|z| z.norm_sqr()).sum()
}

/// Meyer-Wallach `Q = 2 (1 - mean_k Tr(ρ_k^2))`.
pub fn meyer_wallach(state: &StateVector) -> Result<f64> {
    let n = state.num_qubits();
    let mut total = 0.0;
    for q in 0..n {
        total += purity2(&state.reduced_qubit(q)?);
    }
    Ok((2.0 * (1.0 - total / n as f64)).clamp(0.0, 1.0))
}

/// Mean Meyer-Wallach entanglement over random parameter draws.
pub fn entangling_capacity(
    circuit: &Circuit,
    num_samples: usize,
    seed: u64,
) -> Result<EntanglingCapacityReport> {
    if num_samples == 0 {
        return Err(Error::Empty("sample set"));
    }
    let qs: Vec<f64> = (0..num_samples)
        .into_par_iter()
        .map(|i| meyer_wallach(&random_state(circuit, &mut sample_rng(seed, i))?))
        .collect::<Result<_>>()?;
    Ok(EntanglingCapacityReport {
        mean_q: qs.iter().sum::<f64>() / num_samples as f64,
        num_samples,
        seed,
    })
}
