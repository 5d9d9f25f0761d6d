//! Discrete power-law tail fitting (maximum likelihood with KS-selected lower bound) and
//! log-log regression slopes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest tail accepted as an x_min candidate.
pub const MIN_TAIL: usize = 10;
/// A candidate tail must also contain this many distinct values.
pub const MIN_TAIL_DISTINCT: usize = 3;
/// Below this size a fit still runs but is logged as low-power.
pub const LOW_POWER_N: usize = 50;

const ALPHA_LO: f64 = 1.0 + 1e-9;
const ALPHA_HI: f64 = 10.0;
const ALPHA_TOL: f64 = 1e-6;

// B_2j / (2j)! for j = 1..=7
const EULER_MACLAURIN: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
    1.0 / 74_724_249_600.0,
];

/// Hurwitz zeta ζ(s, q) = Σ_{k≥0} (q + k)^−s for s > 1, q > 0.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const DIRECT: usize = 12;
    let mut sum = 0.0;
    for k in 0..DIRECT {
        sum += (q + k as f64).powf(-s);
    }
    let a = q + DIRECT as f64;
    let a_pow = a.powf(-s);
    sum += a * a_pow / (s - 1.0) + 0.5 * a_pow;
    // rising factorial s (s+1) ... (s+2j-2) times a^(-s-2j+1)
    let mut rising = s;
    let mut term_pow = a_pow / a;
    let inv_a2 = 1.0 / (a * a);
    for (j, coeff) in EULER_MACLAURIN.iter().enumerate() {
        if j > 0 {
            let m = 2.0 * j as f64;
            rising *= (s + m - 1.0) * (s + m);
            term_pow *= inv_a2;
        }
        sum += coeff * rising * term_pow;
    }
    sum
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailForm {
    /// Exponent of the probability mass function, p(x) ∝ x^−exponent.
    #[default]
    Density,
    /// Exponent of the complementary CDF, one less than the density exponent.
    Ccdf,
}

impl FromStr for TailForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density" => Ok(TailForm::Density),
            "ccdf" => Ok(TailForm::Ccdf),
            _ => Err(Error::Usage(format!(
                "unknown tail form {s:?} (expected density or ccdf)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub form: TailForm,
    pub exponent: f64,
    pub x_min: u64,
    #[serde(rename = "ks")]
    pub ks_distance: f64,
    pub n_tail: usize,
    pub stderr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl PowerLawFit {
    pub fn density_exponent(&self) -> f64 {
        match self.form {
            TailForm::Density => self.exponent,
            TailForm::Ccdf => self.exponent + 1.0,
        }
    }

    /// The same fit with the exponent expressed in `form`.
    pub fn in_form(&self, form: TailForm) -> PowerLawFit {
        let alpha = self.density_exponent();
        PowerLawFit {
            form,
            exponent: match form {
                TailForm::Density => alpha,
                TailForm::Ccdf => alpha - 1.0,
            },
            ..self.clone()
        }
    }
}

/// Distinct sorted values with their multiplicities.
struct Histogram {
    values: Vec<u64>,
    counts: Vec<usize>,
    /// suffix_n[k] = number of samples ≥ values[k]
    suffix_n: Vec<usize>,
    /// suffix_ln[k] = Σ ln x over samples ≥ values[k]
    suffix_ln: Vec<f64>,
}

impl Histogram {
    fn new(sample: &[u64]) -> Histogram {
        let mut sorted = sample.to_vec();
        sorted.sort_unstable();
        let mut values = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for x in sorted {
            if values.last() == Some(&x) {
                *counts.last_mut().unwrap() += 1;
            } else {
                values.push(x);
                counts.push(1);
            }
        }
        let d = values.len();
        let mut suffix_n = vec![0; d + 1];
        let mut suffix_ln = vec![0.0; d + 1];
        for k in (0..d).rev() {
            suffix_n[k] = suffix_n[k + 1] + counts[k];
            suffix_ln[k] = suffix_ln[k + 1] + counts[k] as f64 * (values[k] as f64).ln();
        }
        Histogram {
            values,
            counts,
            suffix_n,
            suffix_ln,
        }
    }
}

fn log_likelihood(alpha: f64, x_min: u64, n: usize, sum_ln: f64) -> f64 {
    -(n as f64) * hurwitz_zeta(alpha, x_min as f64).ln() - alpha * sum_ln
}

/// Golden-section maximization of a unimodal function on [lo, hi].
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// Maximum-likelihood density exponent for the tail starting at `values[k]`.
fn tail_mle(h: &Histogram, k: usize) -> f64 {
    let (x_min, n, sum_ln) = (h.values[k], h.suffix_n[k], h.suffix_ln[k]);
    golden_max(
        |a| log_likelihood(a, x_min, n, sum_ln),
        ALPHA_LO,
        ALPHA_HI,
        ALPHA_TOL,
    )
}

/// Largest CDF gap between the empirical tail and the fitted law, over every integer ≥ x_min.
fn tail_ks(h: &Histogram, k: usize, alpha: f64) -> f64 {
    const RECURRENCE_GAP: u64 = 32;
    let n = h.suffix_n[k] as f64;
    let norm = hurwitz_zeta(alpha, h.values[k] as f64);
    let mut zeta_here = norm;
    let mut seen = 0usize;
    let mut ks: f64 = 0.0;
    for j in k..h.values.len() {
        let x = h.values[j];
        seen += h.counts[j];
        let empirical = seen as f64 / n;
        let model_at = 1.0 - (zeta_here - (x as f64).powf(-alpha)) / norm;
        ks = ks.max((empirical - model_at).abs());
        let Some(&next) = h.values.get(j + 1) else {
            break;
        };
        let zeta_next = if next - x <= RECURRENCE_GAP {
            (x..next).fold(zeta_here, |z, y| z - (y as f64).powf(-alpha))
        } else {
            hurwitz_zeta(alpha, next as f64)
        };
        let model_before_next = 1.0 - zeta_next / norm;
        ks = ks.max((empirical - model_before_next).abs());
        zeta_here = zeta_next;
    }
    ks.min(1.0)
}

/// One x_min candidate's fit, used by the scan and exposed for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateFit {
    pub x_min: u64,
    pub alpha: f64,
    pub ks_distance: f64,
    pub n_tail: usize,
}

fn scan(h: &Histogram) -> Vec<CandidateFit> {
    (0..h.values.len())
        .filter(|&k| h.suffix_n[k] >= MIN_TAIL && h.values.len() - k >= MIN_TAIL_DISTINCT)
        .map(|k| {
            let alpha = tail_mle(h, k);
            CandidateFit {
                x_min: h.values[k],
                alpha,
                ks_distance: tail_ks(h, k, alpha),
                n_tail: h.suffix_n[k],
            }
        })
        .collect()
}

fn check_sample(sample: &[u64]) -> Result<()> {
    if sample.contains(&0) {
        return Err(Error::Invalid(
            "power-law samples must be positive integers".into(),
        ));
    }
    match sample.first() {
        None => Err(Error::DegenerateSample("empty sample".into())),
        Some(&first) if sample.iter().all(|&x| x == first) => Err(Error::DegenerateSample(
            format!("all {} values equal {first}", sample.len()),
        )),
        _ => Ok(()),
    }
}

/// Every admissible x_min candidate with its MLE exponent and KS distance.
pub fn candidate_fits(sample: &[u64]) -> Result<Vec<CandidateFit>> {
    check_sample(sample)?;
    Ok(scan(&Histogram::new(sample)))
}

/// Fit a discrete power law to the upper tail of `sample`. The exponent is reported in
/// density form.
pub fn fit_discrete_powerlaw(sample: &[u64]) -> Result<PowerLawFit> {
    check_sample(sample)?;
    if sample.len() < LOW_POWER_N {
        log::warn!(
            "power-law fit on only {} values has low power",
            sample.len()
        );
    }
    let best = scan(&Histogram::new(sample))
        .into_iter()
        .reduce(|best, c| if c.ks_distance < best.ks_distance { c } else { best })
        .ok_or_else(|| {
            Error::NoFit(format!(
                "no lower bound leaves {MIN_TAIL} values and {MIN_TAIL_DISTINCT} distinct values in the tail"
            ))
        })?;
    Ok(PowerLawFit {
        form: TailForm::Density,
        exponent: best.alpha,
        x_min: best.x_min,
        ks_distance: best.ks_distance,
        n_tail: best.n_tail,
        stderr: (best.alpha - 1.0) / (best.n_tail as f64).sqrt(),
        p_value: None,
        seed: None,
    })
}

/// Discrete power law on {x_min, x_min + 1, ...} with density exponent `alpha`.
#[derive(Clone, Debug)]
pub struct DiscretePowerLaw {
    alpha: f64,
    x_min: u64,
    norm: f64,
    /// ccdf_table[i] = P(X ≥ x_min + i)
    ccdf_table: Vec<f64>,
}

impl DiscretePowerLaw {
    const TABLE: usize = 4096;
    const MAX_VALUE: u64 = 1 << 52;

    pub fn new(alpha: f64, x_min: u64) -> Result<DiscretePowerLaw> {
        if !(alpha > 1.0) || x_min == 0 {
            return Err(Error::Invalid(format!(
                "power law needs alpha > 1 and x_min ≥ 1 (got {alpha}, {x_min})"
            )));
        }
        let norm = hurwitz_zeta(alpha, x_min as f64);
        let mut ccdf_table = Vec::with_capacity(Self::TABLE);
        let mut z = norm;
        for i in 0..Self::TABLE as u64 {
            ccdf_table.push(z / norm);
            z -= ((x_min + i) as f64).powf(-alpha);
        }
        Ok(DiscretePowerLaw {
            alpha,
            x_min,
            norm,
            ccdf_table,
        })
    }

    pub fn ccdf(&self, x: u64) -> f64 {
        if x <= self.x_min {
            return 1.0;
        }
        match self.ccdf_table.get((x - self.x_min) as usize) {
            Some(&p) => p,
            None => hurwitz_zeta(self.alpha, x as f64) / self.norm,
        }
    }

    /// Inverse-CDF draw: the largest x with P(X ≥ x) ≥ u.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        let last = *self.ccdf_table.last().unwrap();
        if u > last {
            // ccdf_table is decreasing; count entries ≥ u
            let i = self.ccdf_table.partition_point(|&p| p >= u);
            return self.x_min + i as u64 - 1;
        }
        let mut lo = self.x_min + Self::TABLE as u64 - 1;
        let mut hi = lo * 2;
        while hi < Self::MAX_VALUE && self.ccdf(hi) >= u {
            lo = hi;
            hi *= 2;
        }
        if hi >= Self::MAX_VALUE {
            return lo;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.ccdf(mid) >= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Semi-parametric bootstrap p-value: the share of synthetic samples whose own best fit
/// has a KS distance at least as large as the observed one. Replications that admit no
/// fit are skipped.
pub fn goodness_of_fit(
    sample: &[u64],
    fit: &PowerLawFit,
    replications: usize,
    seed: u64,
) -> Result<f64> {
    let law = DiscretePowerLaw::new(fit.density_exponent(), fit.x_min)?;
    let below: Vec<u64> = sample.iter().copied().filter(|&x| x < fit.x_min).collect();
    let n = sample.len();
    let p_tail = fit.n_tail as f64 / n as f64;
    let outcomes: Vec<Option<bool>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let synthetic: Vec<u64> = (0..n)
                .map(|_| {
                    if below.is_empty() || rng.random::<f64>() < p_tail {
                        law.sample(&mut rng)
                    } else {
                        below[rng.random_range(0..below.len())]
                    }
                })
                .collect();
            check_sample(&synthetic).ok()?;
            let best = scan(&Histogram::new(&synthetic))
                .into_iter()
                .map(|c| c.ks_distance)
                .reduce(f64::min)?;
            Some(best >= fit.ks_distance)
        })
        .collect();
    let done: Vec<bool> = outcomes.into_iter().flatten().collect();
    if done.is_empty() {
        return Err(Error::NoFit(
            "no bootstrap replication admitted a fit".into(),
        ));
    }
    Ok(done.iter().filter(|&&b| b).count() as f64 / done.len() as f64)
}

/// Fit and attach a seeded bootstrap p-value.
pub fn fit_with_p_value(sample: &[u64], replications: usize, seed: u64) -> Result<PowerLawFit> {
    let mut fit = fit_discrete_powerlaw(sample)?;
    fit.p_value = Some(goodness_of_fit(sample, &fit, replications, seed)?);
    fit.seed = Some(seed);
    Ok(fit)
}

/// Inclusive integer range of lags used by slope fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitRange {
    pub lo: i64,
    pub hi: i64,
}

impl Default for FitRange {
    fn default() -> Self {
        FitRange { lo: 3, hi: 200 }
    }
}

impl FitRange {
    pub fn new(lo: i64, hi: i64) -> Result<FitRange> {
        if lo < 1 || hi <= lo {
            return Err(Error::Usage(format!(
                "fit range needs 1 ≤ lo < hi, got {lo}:{hi}"
            )));
        }
        Ok(FitRange { lo, hi })
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.lo..=self.hi).contains(&t)
    }
}

impl fmt::Display for FitRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl FromStr for FitRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("fit range {s:?} is not LO:HI"));
        let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
        FitRange::new(
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Negated OLS slope, so that value ~ t^−beta.
    pub beta: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// OLS of ln(value) on ln(t) over the points of `series` whose t lies in `range`.
pub fn loglog_slope(series: &[(i64, f64)], range: FitRange) -> Result<SlopeFit> {
    if range.lo < 1 {
        return Err(Error::Usage(format!(
            "fit range must start at t ≥ 1, got {range}"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, value) in series.iter().filter(|(t, _)| range.contains(*t)) {
        if !(value > 0.0) {
            return Err(Error::Domain { t, value });
        }
        xs.push((t as f64).ln());
        ys.push(value.ln());
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "{n} points in fit range {range}, need at least 2"
        )));
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Ok(SlopeFit {
            beta: 0.0,
            stderr: 0.0,
            r_squared: 1.0,
            n_points: n,
        });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Invalid(format!(
            "fit range {range} holds a single distinct t"
        )));
    }
    let slope = sxy / sxx;
    let sse = (syy - slope * sxy).max(0.0);
    let stderr = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        beta: -slope,
        stderr,
        r_squared: 1.0 - sse / syy,
        n_points: n,
    })
}
