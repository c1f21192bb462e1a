//! Size distributions, discrete power-law fits and longest cascades.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum tail observations for a fit, and for an xmin candidate.
pub const MIN_TAIL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub size: usize,
    pub count: usize,
    /// `P(X >= size)`.
    pub ccdf: f64,
}

/// Histogram and CCDF of cascade sizes, ascending by size.
pub fn size_table(sizes: &[usize]) -> Vec<DistributionRow> {
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in sizes {
        *hist.entry(s).or_default() += 1;
    }
    let total = sizes.len();
    let mut at_least = total;
    hist.into_iter()
        .map(|(size, count)| {
            let row = DistributionRow {
                size,
                count,
                ccdf: at_least as f64 / total as f64,
            };
            at_least -= count;
            row
        })
        .collect()
}

pub fn size_distribution(
    cascades: &BTreeMap<String, Vec<Cascade>>,
) -> BTreeMap<String, Vec<DistributionRow>> {
    cascades
        .iter()
        .map(|(city, list)| {
            let sizes: Vec<usize> = list.iter().map(Cascade::size).collect();
            (city.clone(), size_table(&sizes))
        })
        .collect()
}

/// Least-squares slope of `ln P(X >= x)` against `ln x` over rows with
/// `size >= xmin`. `None` with fewer than two such rows.
pub fn ccdf_tail_slope(rows: &[DistributionRow], xmin: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.size >= xmin && r.size > 0)
        .map(|r| ((r.size as f64).ln(), r.ccdf.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

// ---------------------------------------------------------------------------
// Hurwitz zeta
// ---------------------------------------------------------------------------

/// `B_{2j} / (2j)!` for j = 1..=6.
const EM_COEFFS: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
];

/// Hurwitz zeta `ζ(s, q) = Σ_{k≥0} (q + k)^(-s)` for `s > 1`, `q > 0`, by
/// Euler–Maclaurin summation after shifting `q` past 10.
pub fn hurwitz_zeta<F: Scalar>(s: F, q: F) -> F {
    debug_assert!(s > F::one() && q > F::zero());
    let ten = F::lit(10.0);
    let mut sum = F::zero();
    let mut a = q;
    while a < ten {
        sum = sum + a.powf(-s);
        a = a + F::one();
    }
    let one = F::one();
    sum = sum + a.powf(one - s) / (s - one) + a.powf(-s) / F::lit(2.0);

    // term j: c_j * s (s+1) ... (s+2j-2) * a^(-s-2j+1)
    let mut rising = s;
    let mut power = a.powf(-s - one);
    let inv_a2 = (a * a).recip();
    for (j, &c) in EM_COEFFS.iter().enumerate() {
        if j > 0 {
            let k = F::from_count(2 * j);
            rising = rising * (s + k - one) * (s + k);
            power = power * inv_a2;
        }
        sum = sum + F::lit(c) * rising * power;
    }
    sum
}

// ---------------------------------------------------------------------------
// power-law fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FitMethod {
    /// Numerical maximization of the exact discrete likelihood.
    #[default]
    Exact,
    /// Closed form `1 + n / Σ ln(x / (xmin - 1/2))`.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<F> {
    /// Exponent of `P(X = x) ∝ x^(-alpha)`; always > 1.
    pub alpha: F,
    pub xmin: u64,
    /// Kolmogorov–Smirnov distance between empirical and fitted tail CDFs.
    pub ks_statistic: F,
    pub n_tail: usize,
    pub method: FitMethod,
}

impl<F: Scalar> PowerLawFit<F> {
    /// Slope sign convention used in reports: `-alpha`.
    pub fn exponent(&self) -> F {
        -self.alpha
    }
}

/// Distinct values with multiplicities, ascending.
struct Histogram {
    values: Vec<u64>,
    counts: Vec<u64>,
}

impl Histogram {
    fn new(sample: &[u64]) -> Self {
        let mut map: BTreeMap<u64, u64> = BTreeMap::new();
        for &x in sample {
            *map.entry(x).or_default() += 1;
        }
        let (values, counts) = map.into_iter().unzip();
        Histogram { values, counts }
    }
}

/// Sufficient statistics of the tail starting at a distinct value index.
struct Tail<'a> {
    xmin: u64,
    values: &'a [u64],
    counts: &'a [u64],
    n: u64,
}

impl Tail<'_> {
    fn xmin(&self) -> u64 {
        self.xmin
    }

    /// `Σ count · ln(x)`; summing per distinct value keeps the result exactly
    /// proportional to the counts.
    fn sum_ln<F: Scalar>(&self, shift: F) -> F {
        self.values
            .iter()
            .zip(self.counts)
            .map(|(&v, &c)| F::lit(c as f64) * (F::lit(v as f64) / shift).ln())
            .fold(F::zero(), |a, b| a + b)
    }

    fn approximate_alpha<F: Scalar>(&self) -> F {
        let shift = F::lit(self.xmin() as f64 - 0.5);
        F::one() + F::lit(self.n as f64) / self.sum_ln(shift)
    }

    fn log_likelihood<F: Scalar>(&self, alpha: F, sum_ln: F) -> F {
        let n = F::lit(self.n as f64);
        -n * hurwitz_zeta(alpha, F::lit(self.xmin() as f64)).ln() - alpha * sum_ln
    }

    fn mle_alpha<F: Scalar>(&self) -> F {
        let sum_ln = self.sum_ln(F::one());
        let start: F = self.approximate_alpha();
        let mut lo = F::one() + F::lit(1e-6);
        let mut hi = (start * F::lit(2.0)).max(F::lit(10.0));
        // golden-section search; the log-likelihood is concave in alpha
        let inv_phi = F::lit((5f64.sqrt() - 1.0) / 2.0);
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        let mut fc = self.log_likelihood(c, sum_ln);
        let mut fd = self.log_likelihood(d, sum_ln);
        let tol = F::epsilon().sqrt() * F::lit(1e-2);
        for _ in 0..200 {
            if hi - lo <= tol * (F::one() + lo.abs()) {
                break;
            }
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = self.log_likelihood(c, sum_ln);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = self.log_likelihood(d, sum_ln);
            }
        }
        (lo + hi) / F::lit(2.0)
    }

    /// Largest CDF gap over every integer in the tail. Between two observed
    /// values the empirical CDF is flat while the model CDF keeps rising, so
    /// both ends of each gap are checked.
    fn ks_distance<F: Scalar>(&self, alpha: F) -> F {
        let norm = hurwitz_zeta(alpha, F::lit(self.xmin() as f64));
        // model CDF at x: 1 - ζ(α, x + 1) / ζ(α, xmin)
        let model_cdf = |x: u64| F::one() - hurwitz_zeta(alpha, F::lit(x as f64 + 1.0)) / norm;
        let n = F::lit(self.n as f64);
        let mut cum = 0u64;
        let mut worst = F::zero();
        for (i, (&v, &c)) in self.values.iter().zip(self.counts).enumerate() {
            cum += c;
            let emp = F::lit(cum as f64) / n;
            worst = worst.max((emp - model_cdf(v)).abs());
            if let Some(&next) = self.values.get(i + 1) {
                if next > v + 1 {
                    worst = worst.max((model_cdf(next - 1) - emp).abs());
                }
            }
        }
        worst
    }
}

fn tail_at<'a>(h: &'a Histogram, start: usize, suffix_counts: &[u64]) -> Tail<'a> {
    Tail {
        xmin: h.values[start],
        values: &h.values[start..],
        counts: &h.counts[start..],
        n: suffix_counts[start],
    }
}

fn fit_tail<F: Scalar>(tail: &Tail<'_>, method: FitMethod) -> PowerLawFit<F> {
    let alpha = match method {
        FitMethod::Exact => tail.mle_alpha(),
        FitMethod::Approximate => tail.approximate_alpha(),
    };
    PowerLawFit {
        alpha,
        xmin: tail.xmin(),
        ks_statistic: tail.ks_distance(alpha),
        n_tail: tail.n as usize,
        method,
    }
}

/// Fit with `xmin` chosen to minimize the KS distance. Candidates are the
/// distinct observed values `>= 2` that leave at least [`MIN_TAIL`]
/// observations in the tail.
pub fn fit_power_law<F: Scalar>(sample: &[u64], method: FitMethod) -> Result<PowerLawFit<F>> {
    let h = Histogram::new(sample);
    let mut suffix = vec![0u64; h.values.len() + 1];
    for i in (0..h.values.len()).rev() {
        suffix[i] = suffix[i + 1] + h.counts[i];
    }
    let candidates: Vec<usize> = (0..h.values.len())
        .filter(|&i| h.values[i] >= 2 && suffix[i] >= MIN_TAIL as u64)
        .collect();
    if candidates.is_empty() {
        let got = sample.iter().filter(|&&x| x >= 2).count();
        return Err(Error::TooFewTailPoints {
            needed: MIN_TAIL,
            got,
        });
    }
    // a tail with a single distinct value has no finite MLE
    let usable: Vec<usize> = candidates
        .into_iter()
        .filter(|&i| i + 1 < h.values.len())
        .collect();
    if usable.is_empty() {
        return Err(Error::DegenerateFit(
            "every candidate tail holds a single distinct value".into(),
        ));
    }
    let fits: Vec<PowerLawFit<F>> = usable
        .par_iter()
        .map(|&i| fit_tail(&tail_at(&h, i, &suffix), method))
        .collect();
    // strict improvement keeps the smallest xmin on ties
    let mut best = fits[0];
    for f in &fits[1..] {
        if f.ks_statistic < best.ks_statistic {
            best = *f;
        }
    }
    Ok(best)
}

/// Fit the tail `x >= xmin` without scanning.
pub fn fit_power_law_at<F: Scalar>(
    sample: &[u64],
    xmin: u64,
    method: FitMethod,
) -> Result<PowerLawFit<F>> {
    let tail: Vec<u64> = sample.iter().copied().filter(|&x| x >= xmin).collect();
    if tail.len() < MIN_TAIL {
        return Err(Error::TooFewTailPoints {
            needed: MIN_TAIL,
            got: tail.len(),
        });
    }
    if xmin < 1 {
        return Err(Error::DegenerateFit("xmin must be positive".into()));
    }
    let h = Histogram::new(&tail);
    if h.values.len() < 2 {
        return Err(Error::DegenerateFit("tail holds a single distinct value".into()));
    }
    let t = Tail {
        xmin,
        values: &h.values,
        counts: &h.counts,
        n: tail.len() as u64,
    };
    Ok(fit_tail(&t, method))
}

// ---------------------------------------------------------------------------
// longest cascades and DOT export
// ---------------------------------------------------------------------------

/// Up to `top_k` largest cascades per city, descending by size, ties by id.
pub fn longest_cascades(
    cascades: &BTreeMap<String, Vec<Cascade>>,
    top_k: usize,
) -> BTreeMap<String, Vec<&Cascade>> {
    cascades
        .iter()
        .map(|(city, list)| {
            let mut sorted: Vec<&Cascade> = list.iter().collect();
            sorted.sort_by(|a, b| b.size().cmp(&a.size()).then_with(|| a.id.cmp(&b.id)));
            sorted.truncate(top_k);
            (city.clone(), sorted)
        })
        .collect()
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph with nodes numbered by event order.
pub fn export_dot(cascade: &Cascade) -> String {
    let g = cascade.to_digraph();
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", dot_escape(&cascade.id.to_string())).unwrap();
    out.push_str("  rankdir=LR;\n  node [shape=circle];\n");
    for i in 0..g.n_nodes() {
        writeln!(out, "  n{i} [label=\"{i}\"];").unwrap();
    }
    for (s, d) in g.edges() {
        writeln!(out, "  n{s} -> n{d};").unwrap();
    }
    out.push_str("}\n");
    out
}
