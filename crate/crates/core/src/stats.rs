//! Test statistics and the report row every harness emits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid, Result};

pub const DEFAULT_ALPHA: f64 = 0.01;
/// Two-sided 3σ rule used as the base per-comparison threshold.
pub const BASE_Z: f64 = 3.0;
/// Anderson–Darling critical value at level 0.01 for a fully specified null.
pub const AD_CRITICAL_01: f64 = 3.857;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    ReportOnly,
}

/// Where a comparison target comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// A constant or statement quoted from the literature.
    Published,
    /// Holds by definition or elementary algebra.
    Trivial,
    /// Computed by an independent oracle inside this crate.
    Derived,
}

/// The statistic a report's `value` holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    /// (estimate − target) / se, passes when |z| ≤ threshold.
    Z,
    /// Kolmogorov–Smirnov distance, passes when ≤ threshold.
    Ks,
    /// Total-variation distance, passes when ≤ threshold.
    Tv,
    /// Chi-square p-value, passes when ≥ threshold.
    PValue,
    /// Anderson–Darling A², passes when ≤ threshold.
    AndersonDarling,
    /// |estimate − target| / |target|, passes when ≤ threshold.
    RelativeError,
    /// |estimate − target|, passes when ≤ threshold.
    AbsoluteError,
    /// Signed margin; passes when ≥ threshold.
    Margin,
    /// Plain value with no pass rule.
    Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub n: u64,
    pub target: f64,
    pub provenance: Provenance,
    pub statistic: Statistic,
    pub value: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl StatReport {
    #[allow(clippy::too_many_arguments)]
    fn judged(
        name: impl Into<String>,
        estimate: f64,
        se: f64,
        n: u64,
        target: f64,
        provenance: Provenance,
        statistic: Statistic,
        value: f64,
        threshold: f64,
    ) -> Self {
        let mut r = Self {
            name: name.into(),
            estimate,
            se,
            n,
            target,
            provenance,
            statistic,
            value,
            threshold,
            verdict: Verdict::Fail,
            notes: Vec::new(),
        };
        r.verdict = r.expected_verdict();
        r
    }

    /// z-test of `estimate ± se` against `target`.
    pub fn z_test(
        name: impl Into<String>,
        estimate: f64,
        se: f64,
        n: u64,
        target: f64,
        provenance: Provenance,
        threshold: f64,
    ) -> Self {
        let z = z_score(estimate, target, se);
        Self::judged(
            name,
            estimate,
            se,
            n,
            target,
            provenance,
            Statistic::Z,
            z,
            threshold,
        )
    }

    /// Pass when `value` (a distance or error of the given kind) is at most `threshold`.
    pub fn at_most(
        name: impl Into<String>,
        statistic: Statistic,
        value: f64,
        threshold: f64,
        n: u64,
        provenance: Provenance,
    ) -> Self {
        Self::judged(
            name, value, 0.0, n, 0.0, provenance, statistic, value, threshold,
        )
    }

    pub fn relative_error(
        name: impl Into<String>,
        estimate: f64,
        target: f64,
        threshold: f64,
        provenance: Provenance,
    ) -> Self {
        let v = (estimate - target).abs() / target.abs();
        Self::judged(
            name,
            estimate,
            0.0,
            0,
            target,
            provenance,
            Statistic::RelativeError,
            v,
            threshold,
        )
    }

    pub fn absolute_error(
        name: impl Into<String>,
        estimate: f64,
        target: f64,
        threshold: f64,
        provenance: Provenance,
    ) -> Self {
        let v = (estimate - target).abs();
        Self::judged(
            name,
            estimate,
            0.0,
            0,
            target,
            provenance,
            Statistic::AbsoluteError,
            v,
            threshold,
        )
    }

    /// Pass when `margin ≥ threshold`.
    pub fn margin(
        name: impl Into<String>,
        margin: f64,
        threshold: f64,
        provenance: Provenance,
    ) -> Self {
        Self::judged(
            name,
            margin,
            0.0,
            0,
            threshold,
            provenance,
            Statistic::Margin,
            margin,
            threshold,
        )
    }

    /// Recorded without a verdict.
    pub fn report_only(
        name: impl Into<String>,
        estimate: f64,
        se: f64,
        n: u64,
        target: f64,
        provenance: Provenance,
    ) -> Self {
        Self {
            name: name.into(),
            estimate,
            se,
            n,
            target,
            provenance,
            statistic: Statistic::Value,
            value: estimate,
            threshold: f64::NAN,
            verdict: Verdict::ReportOnly,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Force a verdict regardless of the threshold rule (used for checks whose
    /// pass condition combines several numbers).
    pub fn with_verdict(mut self, verdict: Verdict) -> Self {
        self.verdict = verdict;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }

    /// Verdict implied by `statistic`, `value` and `threshold`.
    pub fn expected_verdict(&self) -> Verdict {
        let ok = match self.statistic {
            Statistic::Value => return Verdict::ReportOnly,
            Statistic::Z => self.value.abs() <= self.threshold,
            Statistic::PValue | Statistic::Margin => self.value >= self.threshold,
            Statistic::Ks
            | Statistic::Tv
            | Statistic::AndersonDarling
            | Statistic::RelativeError
            | Statistic::AbsoluteError => self.value <= self.threshold,
        };
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let tag = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::ReportOnly => "INFO",
        };
        match self.statistic {
            Statistic::Value => format!(
                "{tag} {}: {:.6} (se {:.2e}, n {})",
                self.name, self.estimate, self.se, self.n
            ),
            Statistic::Z => format!(
                "{tag} {}: {:.6} vs {:.6} (se {:.2e}, z {:.2}, |z| ≤ {:.2})",
                self.name, self.estimate, self.target, self.se, self.value, self.threshold
            ),
            _ => format!(
                "{tag} {}: {:?} {:.4e} (threshold {:.4e})",
                self.name, self.statistic, self.value, self.threshold
            ),
        }
    }
}

pub fn z_score(estimate: f64, target: f64, se: f64) -> f64 {
    let d = estimate - target;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(d)
    }
}

/// Welch statistic for two independent estimates.
pub fn welch_z(mean_a: f64, se_a: f64, mean_b: f64, se_b: f64) -> f64 {
    z_score(mean_a, mean_b, (se_a * se_a + se_b * se_b).sqrt())
}

/// Two-sided per-comparison threshold keeping the family-wise level of `m`
/// comparisons at the level of a single `base_z` test.
pub fn bonferroni_z(base_z: f64, m: usize) -> f64 {
    let std = Normal::standard();
    let alpha = 2.0 * (1.0 - std.cdf(base_z));
    std.inverse_cdf(1.0 - alpha / (2.0 * m.max(1) as f64))
}

/// Streaming mean and variance (Welford). Merging is exact up to rounding
/// and is used in fixed replica order for reproducible reductions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        for &x in xs {
            m.push(x);
        }
        m
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// DKW band half-width: P(sup|F_n − F| > ε) ≤ α.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// sup_x |F_n(x) − F(x)| for a continuous `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// One-sample KS test at level `alpha` with the DKW threshold.
pub fn ks_test<F: Fn(f64) -> f64>(
    name: impl Into<String>,
    samples: &[f64],
    cdf: F,
    alpha: f64,
    provenance: Provenance,
) -> Result<StatReport> {
    if samples.len() < 10 {
        return Err(invalid(format!(
            "KS test needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    let d = ks_distance(samples, cdf);
    let eps = dkw_epsilon(samples.len(), alpha);
    Ok(StatReport::at_most(
        name,
        Statistic::Ks,
        d,
        eps,
        samples.len() as u64,
        provenance,
    ))
}

/// Two-sample KS distance sup|F_a − F_b|.
pub fn ks_two_sample_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS test at level `alpha` (asymptotic critical value).
pub fn ks_two_sample(
    name: impl Into<String>,
    a: &[f64],
    b: &[f64],
    alpha: f64,
    provenance: Provenance,
) -> Result<StatReport> {
    if a.len() < 10 || b.len() < 10 {
        return Err(invalid(
            "two-sample KS test needs at least 10 samples per side",
        ));
    }
    let d = ks_two_sample_distance(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let crit = c * ((na + nb) / (na * nb)).sqrt();
    Ok(StatReport::at_most(
        name,
        Statistic::Ks,
        d,
        crit,
        (a.len() + b.len()) as u64,
        provenance,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub se: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Ordinary least squares of y on x.
pub fn linear_fit(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    let n = pairs.len();
    if n < 3 {
        return Err(invalid(format!(
            "a slope fit needs at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("slope fit needs at least two distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pairs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(SlopeFit {
        slope,
        se,
        intercept,
        r2,
        points: n,
    })
}

/// Least-squares slope of log(count) against log(N).
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if let Some(p) = pairs.iter().find(|p| !(p.0 > 0.0) || !(p.1 > 0.0)) {
        return Err(invalid(format!(
            "log-log fit needs positive values, got {p:?}"
        )));
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    linear_fit(&logs)
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// Empirical pmf of nonnegative integer counts on {0, .., max}.
pub fn empirical_pmf(counts: &[u64]) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut pmf = vec![0.0; max + 1];
    for &c in counts {
        pmf[c as usize] += 1.0;
    }
    let n = counts.len().max(1) as f64;
    pmf.iter_mut().for_each(|p| *p /= n);
    pmf
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of independence for an r × c contingency table.
/// Rows or columns with zero total are dropped.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquareResult> {
    let cols = table.first().map_or(0, |r| r.len());
    if table.iter().any(|r| r.len() != cols) {
        return Err(invalid("contingency table rows differ in length"));
    }
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_tot: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let total: f64 = row_tot.iter().sum();
    let live_rows: Vec<usize> = (0..table.len()).filter(|&i| row_tot[i] > 0.0).collect();
    let live_cols: Vec<usize> = (0..cols).filter(|&j| col_tot[j] > 0.0).collect();
    if live_rows.len() < 2 || live_cols.len() < 2 {
        return Err(invalid(
            "contingency table needs at least two nonempty rows and columns",
        ));
    }
    let mut stat = 0.0;
    for &i in &live_rows {
        for &j in &live_cols {
            let e = row_tot[i] * col_tot[j] / total;
            stat += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    let dof = (live_rows.len() - 1) * (live_cols.len() - 1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: dist.sf(stat),
    })
}

/// Anderson–Darling A² against N(mean, sd²) with known parameters.
pub fn anderson_darling_normal(samples: &[f64], mean: f64, sd: f64) -> Result<f64> {
    if samples.len() < 8 {
        return Err(invalid("Anderson-Darling needs at least 8 samples"));
    }
    let dist = Normal::new(mean, sd).map_err(|e| invalid(e.to_string()))?;
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let f_lo = dist.cdf(xs[i]).clamp(1e-300, 1.0 - 1e-16);
        let f_hi = dist.cdf(xs[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2 * i + 1) as f64 * (f_lo.ln() + (1.0 - f_hi).ln());
    }
    Ok(-nf - s / nf)
}

/// Pearson correlation and its null z-score √n·r.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(invalid(
            "correlation needs two equal-length samples of size ≥ 3",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(invalid("correlation of a constant sample"));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok((r, r * n.sqrt()))
}

/// Empirical quantile with linear interpolation (type 7).
pub fn quantile(samples: &[f64], p: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    quantile_sorted(&xs, p)
}

pub fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let h = (xs.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

pub fn median(samples: &[f64]) -> f64 {
    quantile(samples, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngFactory};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    fn exp_samples(n: usize, rate: f64, seed: u64) -> Vec<f64> {
        let mut rng = RngFactory::new(seed).stream(Purpose::Custom(1), 0);
        let d = Exp::new(rate).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn ks_accepts_and_rejects() {
        let xs = exp_samples(10_000, 1.0, 1);
        let ok = ks_test("exp1", &xs, |x| 1.0 - (-x).exp(), 0.01, Provenance::Trivial).unwrap();
        assert_eq!(ok.verdict, Verdict::Pass);
        let bad = ks_test(
            "exp2",
            &xs,
            |x| 1.0 - (-x / 2.0).exp(),
            0.01,
            Provenance::Derived,
        )
        .unwrap();
        assert_eq!(bad.verdict, Verdict::Fail);
        assert!(ks_test("short", &xs[..5], |x| x, 0.01, Provenance::Trivial).is_err());
    }

    #[test]
    fn two_sample_ks() {
        let a = exp_samples(5000, 1.0, 2);
        let b = exp_samples(5000, 1.0, 3);
        let c = exp_samples(5000, 0.8, 4);
        assert!(ks_two_sample("same", &a, &b, 0.01, Provenance::Trivial)
            .unwrap()
            .passed());
        assert!(!ks_two_sample("diff", &a, &c, 0.01, Provenance::Trivial)
            .unwrap()
            .passed());
        assert_eq!(
            ks_two_sample_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]),
            0.0
        );
    }

    #[test]
    fn slopes() {
        let sq: Vec<_> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&n: &f64| (n, n * n))
            .collect();
        assert_relative_eq!(loglog_slope(&sq).unwrap().slope, 2.0, epsilon = 1e-12);
        let lin: Vec<_> = [3.0, 5.0, 9.0]
            .iter()
            .map(|&n: &f64| (n, 7.5 * n))
            .collect();
        assert_relative_eq!(loglog_slope(&lin).unwrap().slope, 1.0, epsilon = 1e-12);
        assert!(loglog_slope(&lin[..2]).is_err());
        assert!(loglog_slope(&[(1.0, 0.0), (2.0, 1.0), (3.0, 1.0)]).is_err());

        let mut rng = RngFactory::new(9).stream(Purpose::Custom(2), 0);
        let noisy: Vec<_> = [10.0, 20.0, 40.0, 80.0, 160.0, 320.0]
            .iter()
            .map(|&n: &f64| (n, n * (1.0 + 0.05 * (rng.random::<f64>() - 0.5))))
            .collect();
        let fit = loglog_slope(&noisy).unwrap();
        assert!((fit.slope - 1.0).abs() < 2.0 * fit.se + 1e-3, "{fit:?}");
    }

    #[test]
    fn welford_merge_matches_batch() {
        let xs = exp_samples(1000, 1.0, 5);
        let full = Moments::from_slice(&xs);
        let mut a = Moments::from_slice(&xs[..300]);
        a.merge(&Moments::from_slice(&xs[300..]));
        assert_relative_eq!(a.mean(), full.mean(), max_relative = 1e-12);
        assert_relative_eq!(a.variance(), full.variance(), max_relative = 1e-10);
        let mean = xs.iter().sum::<f64>() / 1000.0;
        assert_relative_eq!(full.mean(), mean, max_relative = 1e-12);
    }

    #[test]
    fn bonferroni_reduces_to_base() {
        assert_relative_eq!(bonferroni_z(3.0, 1), 3.0, epsilon = 1e-9);
        assert!(bonferroni_z(3.0, 6) > 3.4);
    }

    #[test]
    fn chi_square_on_independent_table() {
        let t = vec![vec![50, 50], vec![100, 100]];
        let r = chi_square_independence(&t).unwrap();
        assert_eq!(r.dof, 1);
        assert!(r.statistic.abs() < 1e-12);
        assert_relative_eq!(r.p_value, 1.0, epsilon = 1e-12);
        let skew = vec![vec![90, 10], vec![10, 90]];
        assert!(chi_square_independence(&skew).unwrap().p_value < 1e-10);
    }

    #[test]
    fn anderson_darling_normal_detects_exponential() {
        let mut rng = RngFactory::new(4).stream(Purpose::Custom(3), 0);
        let z: Vec<f64> = (0..10_000)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        assert!(anderson_darling_normal(&z, 0.0, 1.0).unwrap() < AD_CRITICAL_01);
        let e = exp_samples(10_000, 1.0, 6);
        assert!(anderson_darling_normal(&e, 1.0, 1.0).unwrap() > AD_CRITICAL_01);
    }

    #[test]
    fn verdicts_follow_thresholds() {
        let r = StatReport::z_test("z", 1.0, 0.1, 10, 1.2, Provenance::Derived, 3.0);
        assert_relative_eq!(r.value, -2.0, epsilon = 1e-12);
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.expected_verdict(), r.verdict);
        let r = StatReport::margin("m", -0.1, 0.0, Provenance::Published);
        assert_eq!(r.verdict, Verdict::Fail);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"provenance\":\"published\""));
        let back: StatReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.name, "m");
    }

    #[test]
    fn misc_helpers() {
        assert_relative_eq!(tv_distance(&[0.5, 0.5], &[1.0]), 0.5);
        assert_eq!(empirical_pmf(&[0, 1, 1, 3]), vec![0.25, 0.5, 0.0, 0.25]);
        assert_relative_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_relative_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        let (r, _) = correlation(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-12);
    }
}
