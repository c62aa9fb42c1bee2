//! Deviation-based inclusion probabilities, fixed-size pivotal sampling,
//! the vector-quantization baseline sampler, and population-total estimators.

use ndarray::ArrayView2;
use rand::Rng;

use crate::error::{Error, Result};

/// Per-unit inclusion probabilities summing to the target sample size.
#[derive(Debug, Clone)]
pub struct InclusionPlan {
    pub probabilities: Vec<f64>,
    pub target_size: usize,
}

impl InclusionPlan {
    pub fn n(&self) -> usize {
        self.probabilities.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMethod {
    Pivotal,
    Vq,
}

/// Distinct unit positions drawn by a sampler; always exactly `target_size` many.
#[derive(Debug, Clone)]
pub struct SampleIndexSet {
    pub indices: Vec<usize>,
    pub method: SampleMethod,
}

impl SampleIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Estimator audit row for one trait.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EstimateReport {
    pub trait_name: String,
    pub actual_total: Option<f64>,
    pub ht_estimate: f64,
    pub hajek_estimate: f64,
}

/// Inclusion probabilities proportional to inverse deviation: units close to
/// the per-trait maxima (small deviation) are sampled with high probability.
///
/// Deviations are floored at 1e-6 × n_traits to keep the weights finite when
/// a unit attains every column maximum. Probabilities exceeding 1 are capped
/// and the surplus is redistributed proportionally over the uncapped units,
/// iterating until all lie in (0, 1]; the total stays exactly N.
pub fn inclusion_probabilities(
    deviations: &[f64],
    n_sample: usize,
    n_traits: usize,
) -> Result<InclusionPlan> {
    let n = deviations.len();
    if n_sample >= n {
        return Err(Error::SampleTooLarge { n_sample, n });
    }
    if n_sample == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    if deviations.iter().all(|&d| d == 0.0) {
        return Err(Error::AllDeviationsZero);
    }

    let floor = 1e-6 * n_traits.max(1) as f64;
    let weights: Vec<f64> = deviations.iter().map(|&d| 1.0 / d.max(floor)).collect();

    let mut probabilities = vec![0.0; n];
    let mut capped = vec![false; n];
    let mut n_capped = 0usize;
    loop {
        let remaining = n_sample - n_capped;
        let weight_sum: f64 = weights
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(w, _)| w)
            .sum();
        let mut overflowed = false;
        for i in 0..n {
            if capped[i] {
                probabilities[i] = 1.0;
            } else {
                probabilities[i] = remaining as f64 * weights[i] / weight_sum;
                if probabilities[i] > 1.0 {
                    capped[i] = true;
                    n_capped += 1;
                    overflowed = true;
                }
            }
        }
        if !overflowed {
            break;
        }
    }

    // float drift: pin Σπ to exactly N by rescaling the uncapped mass
    let capped_sum = n_capped as f64;
    let free_sum: f64 = probabilities
        .iter()
        .zip(&capped)
        .filter(|(_, &c)| !c)
        .map(|(p, _)| p)
        .sum();
    if free_sum > 0.0 {
        let scale = (n_sample as f64 - capped_sum) / free_sum;
        for i in 0..n {
            if !capped[i] {
                probabilities[i] *= scale;
            }
        }
    }

    Ok(InclusionPlan { probabilities, target_size: n_sample })
}

/// Draw a fixed-size sample by sequential pivotal contests in data order.
///
/// Units with π = 1 are selected outright and never contest. The remaining
/// units are scanned once: the carried unit i with residual probability π_i
/// meets the next unit j. When π_i + π_j ≥ 1 one of the two is selected
/// (i with probability (1−π_j)/(2−π_i−π_j)) and the other carries π_i+π_j−1;
/// otherwise one is definitively rejected (i rejected with probability
/// π_j/(π_i+π_j)) and the survivor carries π_i+π_j. Exactly N units come out.
pub fn pivotal_sample(plan: &InclusionPlan, rng: &mut impl Rng) -> SampleIndexSet {
    let order: Vec<usize> = (0..plan.n()).collect();
    pivotal_sample_in_order(plan, &order, rng)
}

/// Pivotal scan over an explicit unit order (for the pre-shuffle option).
pub fn pivotal_sample_in_order(
    plan: &InclusionPlan,
    order: &[usize],
    rng: &mut impl Rng,
) -> SampleIndexSet {
    debug_assert_eq!(order.len(), plan.n());
    let mut selected: Vec<usize> = Vec::with_capacity(plan.target_size);
    let mut carried: Option<(usize, f64)> = None;

    for &idx in order {
        let p = plan.probabilities[idx];
        if p >= 1.0 - 1e-12 {
            selected.push(idx);
            continue;
        }
        let (i, pi) = match carried {
            None => {
                carried = Some((idx, p));
                continue;
            }
            Some(pair) => pair,
        };
        let (j, pj) = (idx, p);
        let total = pi + pj;
        if total >= 1.0 {
            // selection step: one unit wins outright, the loser carries total-1
            if rng.random::<f64>() < (1.0 - pj) / (2.0 - total) {
                selected.push(i);
                carried = Some((j, total - 1.0));
            } else {
                selected.push(j);
                carried = Some((i, total - 1.0));
            }
        } else {
            // rejection step: one unit is out for good, the survivor carries total
            if rng.random::<f64>() < pj / total {
                carried = Some((j, total));
            } else {
                carried = Some((i, total));
            }
        }
    }

    // the carried mass is 0 or 1 up to float drift
    if let Some((i, p)) = carried {
        if p > 0.5 {
            selected.push(i);
        }
    }

    selected.sort_unstable();
    SampleIndexSet { indices: selected, method: SampleMethod::Pivotal }
}

/// Vector-quantization baseline: learn an N-vector codebook by k-means over
/// the rows, then snap each codebook vector to its nearest not-yet-used row
/// (ascending Euclidean distance), so collisions fall through to the next
/// nearest unused row.
pub fn vq_sample(rows: ArrayView2<f64>, n_sample: usize, rng: &mut impl Rng) -> Result<SampleIndexSet> {
    let n = rows.nrows();
    if n_sample >= n {
        return Err(Error::SampleTooLarge { n_sample, n });
    }
    if n_sample < 1 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }

    // single k-means run: the codebook is a baseline, not a contested fit
    let fit = crate::spectral::kmeans_fit(rows, n_sample, rng, 1)?;

    let mut used = vec![false; n];
    let mut indices = Vec::with_capacity(n_sample);
    for c in 0..n_sample {
        let centroid = fit.centroids.row(c);
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let mut d2 = 0.0;
            for t in 0..rows.ncols() {
                let diff = rows[(i, t)] - centroid[t];
                d2 += diff * diff;
            }
            match best {
                Some((bd, _)) if bd <= d2 => {}
                _ => best = Some((d2, i)),
            }
        }
        let (_, i) = best.expect("n_sample < n leaves an unused row");
        used[i] = true;
        indices.push(i);
    }

    indices.sort_unstable();
    Ok(SampleIndexSet { indices, method: SampleMethod::Vq })
}

/// Horvitz-Thompson estimator of a population total: Σ_{i∈S} x_i / π_i.
/// `values` holds the trait values of the sampled units, aligned with
/// `sample.indices`.
pub fn ht_estimate(values: &[f64], plan: &InclusionPlan, sample: &SampleIndexSet) -> Result<f64> {
    check_sample(values, plan, sample)?;
    Ok(values
        .iter()
        .zip(&sample.indices)
        .map(|(x, &i)| x / plan.probabilities[i])
        .sum())
}

/// Hájek ratio estimator: n · (Σ x_i/π_i) / (Σ 1/π_i).
pub fn hajek_estimate(
    values: &[f64],
    plan: &InclusionPlan,
    sample: &SampleIndexSet,
    n: usize,
) -> Result<f64> {
    check_sample(values, plan, sample)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, &i) in values.iter().zip(&sample.indices) {
        num += x / plan.probabilities[i];
        den += 1.0 / plan.probabilities[i];
    }
    Ok(n as f64 * num / den)
}

fn check_sample(values: &[f64], plan: &InclusionPlan, sample: &SampleIndexSet) -> Result<()> {
    if values.len() != sample.len() || sample.len() != plan.target_size {
        return Err(Error::PlanMismatch { sample: sample.len(), plan: plan.target_size });
    }
    if sample.indices.iter().any(|&i| i >= plan.n()) {
        return Err(Error::PlanMismatch { sample: sample.len(), plan: plan.target_size });
    }
    Ok(())
}
