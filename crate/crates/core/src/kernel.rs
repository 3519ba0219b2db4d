//! Multilinear kernels `K(x, y_1, ..., y_m)` on `R^n`, the built-in families,
//! and sampling-based audits of the size and smoothness conditions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed used by the condition checkers unless configured otherwise.
pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

/// User-supplied evaluator: `(x, stacked ys) -> K`. `ys` holds `m` points of
/// dimension `n`, back to back.
pub type KernelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelFamily {
    /// `c / (sum |x - y_i|)^(nm)`.
    Homogeneous { c: f64 },
    /// `prod 1 / (pi (x - y_i))`, `n = 1`.
    TensorHilbert,
    /// `u_j / |u|^(nm + 1)` with `u = (x - y_1, ..., x - y_m)`; `j` is 1-based.
    Riesz { j: usize },
    Zero,
    Custom { name: String, eval: KernelFn },
}

impl fmt::Debug for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Homogeneous { c } => write!(f, "Homogeneous {{ c: {c} }}"),
            Self::TensorHilbert => write!(f, "TensorHilbert"),
            Self::Riesz { j } => write!(f, "Riesz {{ j: {j} }}"),
            Self::Zero => write!(f, "Zero"),
            Self::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// What is known about `||T||` from `(L^2)^m` to `L^(2/m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundedness {
    pub known_bounded: bool,
    pub norm: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct KernelSpec {
    n: usize,
    m: usize,
    family: KernelFamily,
    scale: f64,
    c_k: Option<f64>,
    delta: Option<f64>,
    boundedness: Boundedness,
}

impl KernelSpec {
    pub fn homogeneous(n: usize, m: usize, c: f64) -> Result<Self> {
        check_dims(n, m)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("homogeneous constant must be positive, got {c}")));
        }
        Ok(Self {
            n,
            m,
            family: KernelFamily::Homogeneous { c },
            scale: 1.0,
            c_k: Some(c),
            delta: Some(1.0),
            boundedness: Boundedness {
                known_bounded: false,
                norm: None,
                note: "positive kernel; no boundedness claimed".into(),
            },
        })
    }

    pub fn tensor_hilbert(m: usize) -> Result<Self> {
        check_dims(1, m)?;
        Ok(Self {
            n: 1,
            m,
            family: KernelFamily::TensorHilbert,
            scale: 1.0,
            // The product kernel saturates the size bound only for m = 1.
            c_k: (m == 1).then_some(1.0 / PI),
            delta: Some(1.0),
            boundedness: Boundedness {
                known_bounded: true,
                norm: Some(1.0),
                note: "product of Hilbert transforms; Holder with ||Hf||_2 = ||f||_2".into(),
            },
        })
    }

    pub fn riesz(n: usize, m: usize, j: usize) -> Result<Self> {
        check_dims(n, m)?;
        if j == 0 || j > n * m {
            return Err(Error::InvalidArgument(format!("Riesz direction {j} outside 1..={}", n * m)));
        }
        Ok(Self {
            n,
            m,
            family: KernelFamily::Riesz { j },
            scale: 1.0,
            c_k: Some((m as f64).powf(0.5 * (n * m) as f64)),
            delta: Some(1.0),
            boundedness: Boundedness {
                known_bounded: true,
                norm: None,
                note: "multilinear Riesz transform; bounded by multilinear CZ theory, norm not computed"
                    .into(),
            },
        })
    }

    pub fn zero(n: usize, m: usize) -> Result<Self> {
        check_dims(n, m)?;
        Ok(Self {
            n,
            m,
            family: KernelFamily::Zero,
            scale: 1.0,
            c_k: Some(0.0),
            delta: None,
            boundedness: Boundedness { known_bounded: true, norm: Some(0.0), note: "zero operator".into() },
        })
    }

    /// Library extension point for arbitrary evaluators.
    pub fn custom(
        name: &str,
        n: usize,
        m: usize,
        eval: KernelFn,
        c_k: Option<f64>,
        delta: Option<f64>,
        boundedness: Boundedness,
    ) -> Result<Self> {
        check_dims(n, m)?;
        Ok(Self {
            n,
            m,
            family: KernelFamily::Custom { name: name.into(), eval },
            scale: 1.0,
            c_k,
            delta,
            boundedness,
        })
    }

    /// Looks up a built-in family by its CLI name.
    pub fn by_name(name: &str, n: usize, m: usize, c: f64, j: usize) -> Result<Self> {
        match name {
            "homogeneous" => Self::homogeneous(n, m, c),
            "tensor-hilbert" => {
                if n != 1 {
                    return Err(Error::InvalidArgument("tensor-hilbert requires n = 1".into()));
                }
                Self::tensor_hilbert(m)
            }
            "riesz" => Self::riesz(n, m, j),
            "zero" => Self::zero(n, m),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }

    /// `factor * K`; declared constants scale with it.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale *= factor;
        out.c_k = self.c_k.map(|c| c * factor.abs());
        if let Some(norm) = out.boundedness.norm.as_mut() {
            *norm *= factor.abs();
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn name(&self) -> String {
        match &self.family {
            KernelFamily::Homogeneous { .. } => "homogeneous".into(),
            KernelFamily::TensorHilbert => "tensor-hilbert".into(),
            KernelFamily::Riesz { .. } => "riesz".into(),
            KernelFamily::Zero => "zero".into(),
            KernelFamily::Custom { name, .. } => name.clone(),
        }
    }

    pub fn c_k(&self) -> Option<f64> {
        self.c_k
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn boundedness(&self) -> &Boundedness {
        &self.boundedness
    }

    /// Overall multiplier applied on top of the family formula.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// For the tensor-Hilbert family: the constant `a` with
    /// `K = a prod 1/(x - y_i)`.
    pub fn tensor_factor(&self) -> Option<f64> {
        match self.family {
            KernelFamily::TensorHilbert => Some(self.scale / PI.powi(self.m as i32)),
            _ => None,
        }
    }

    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self.family, KernelFamily::Custom { .. })
    }

    /// Evaluates `K(x, ys)`, `ys` stacked. Singular arguments give a
    /// non-finite result.
    pub fn eval(&self, x: &[f64], ys: &[f64]) -> f64 {
        let (n, m) = (self.n, self.m);
        let base = match &self.family {
            KernelFamily::Homogeneous { c } => {
                let s = sum_of_distances(x, ys, n);
                c / s.powi((n * m) as i32)
            }
            KernelFamily::TensorHilbert => {
                let mut p = 1.0;
                for y in ys {
                    p *= PI * (x[0] - y);
                }
                1.0 / p
            }
            KernelFamily::Riesz { j } => {
                let idx = j - 1;
                let (slot, axis) = (idx / n, idx % n);
                let mut norm_sq = 0.0;
                for (i, y) in ys.iter().enumerate() {
                    let d = x[i % n] - y;
                    norm_sq += d * d;
                }
                let u = x[axis] - ys[slot * n + axis];
                u / norm_sq.sqrt().powi((n * m + 1) as i32)
            }
            KernelFamily::Zero => 0.0,
            KernelFamily::Custom { eval, .. } => eval(x, ys),
        };
        self.scale * base
    }

    /// Like [`Self::eval`] but rejects non-finite values.
    pub fn eval_checked(&self, x: &[f64], ys: &[f64]) -> Result<f64> {
        let v = self.eval(x, ys);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("x={x:?}, y={ys:?}")))
        }
    }
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("dimensions must be positive, got n={n}, m={m}")));
    }
    Ok(())
}

/// `sum_i |x - y_i|` with `ys` stacked.
pub fn sum_of_distances(x: &[f64], ys: &[f64], n: usize) -> f64 {
    ys.chunks_exact(n).map(|y| euclid(x, y)).sum()
}

pub fn max_distance(x: &[f64], ys: &[f64], n: usize) -> f64 {
    ys.chunks_exact(n).map(|y| euclid(x, y)).fold(0.0, f64::max)
}

pub fn min_distance(x: &[f64], ys: &[f64], n: usize) -> f64 {
    ys.chunks_exact(n).map(|y| euclid(x, y)).fold(f64::INFINITY, f64::min)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    /// Distances are drawn log-uniformly from `2^min_log2 .. 2^max_log2`.
    pub min_log2: f64,
    pub max_log2: f64,
    /// Displacement levels `k` for the smoothness fit: `rho = 2^-k max|x - y_i| / 2`.
    pub k_min: u32,
    pub k_max: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { samples: 2000, seed: DEFAULT_SEED, min_log2: -20.0, max_log2: 20.0, k_min: 4, k_max: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    /// `sup |K| (sum |x - y_i|)^(nm)` over the samples.
    pub estimate: f64,
    pub samples: usize,
    pub argmax_x: Vec<f64>,
    pub argmax_ys: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// Fitted exponent for displacements of `x`.
    pub delta_x: Option<f64>,
    /// Fitted exponent per `y_j` slot.
    pub delta_y: Vec<Option<f64>>,
    /// Smallest fitted exponent across variables.
    pub delta: Option<f64>,
    /// `sup |Delta K| S^(nm + delta) / rho^delta` over samples and scales.
    pub constant: Option<f64>,
    /// Every sampled difference vanished.
    pub infinitely_smooth: bool,
    pub scales: usize,
    pub skipped_samples: usize,
}

struct Sample {
    x: Vec<f64>,
    ys: Vec<f64>,
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn draw_samples(k: &KernelSpec, cfg: &SamplerConfig) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, m) = (k.n, k.m);
    (0..cfg.samples)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut ys = Vec::with_capacity(n * m);
            for _ in 0..m {
                let r = 2f64.powf(rng.gen_range(cfg.min_log2..=cfg.max_log2));
                let u = random_unit(&mut rng, n);
                ys.extend(x.iter().zip(&u).map(|(a, b)| a + r * b));
            }
            Sample { x, ys }
        })
        .collect()
}

/// Sampled supremum of `|K| (sum |x - y_i|)^(nm)`.
pub fn check_size(k: &KernelSpec, cfg: &SamplerConfig) -> Result<SizeReport> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let samples = draw_samples(k, cfg);
    let nm = (k.n * k.m) as i32;
    let values: Vec<f64> = samples
        .par_iter()
        .map(|s| -> Result<f64> {
            let v = k.eval_checked(&s.x, &s.ys)?;
            Ok(v.abs() * sum_of_distances(&s.x, &s.ys, k.n).powi(nm))
        })
        .collect::<Result<_>>()?;
    let (best, estimate) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Ok(SizeReport {
        estimate,
        samples: cfg.samples,
        argmax_x: samples[best].x.clone(),
        argmax_ys: samples[best].ys.clone(),
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

// Per-sample data for one displaced variable: (slope, [(rho, |dK| S^nm)]).
type VariableFit = (Option<f64>, Vec<(f64, f64)>);

/// Fits the Holder exponent of `K` in `x` and in each `y_j` from shrinking
/// displacements `rho_k = 2^-k max_i |x - y_i| / 2`.
///
/// Per sample and variable the slope of `log |Delta K|` against `log rho` is
/// fitted by least squares over the scales with `rho <= min_i |x - y_i| / 2`;
/// the reported exponent is the median slope over samples, and
/// the constant is the largest `|Delta K| S^(nm + delta) / rho^delta` seen.
pub fn check_smoothness(k: &KernelSpec, cfg: &SamplerConfig) -> Result<SmoothnessReport> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if cfg.k_max < cfg.k_min + 2 {
        return Err(Error::DegenerateFit(format!(
            "{} displacement scales, need at least 3",
            cfg.k_max.saturating_sub(cfg.k_min) + 1
        )));
    }
    let (n, m) = (k.n, k.m);
    let nm = (n * m) as i32;
    let samples = draw_samples(k, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let directions: Vec<Vec<Vec<f64>>> =
        samples.iter().map(|_| (0..=m).map(|_| random_unit(&mut rng, n)).collect()).collect();
    let scales: Vec<u32> = (cfg.k_min..=cfg.k_max).collect();

    let fits: Vec<Vec<VariableFit>> = samples
        .par_iter()
        .zip(&directions)
        .map(|(s, dirs)| -> Result<Vec<VariableFit>> {
            let base = k.eval_checked(&s.x, &s.ys)?;
            let sum = sum_of_distances(&s.x, &s.ys, n);
            let half_max = 0.5 * max_distance(&s.x, &s.ys, n);
            let half_min = 0.5 * min_distance(&s.x, &s.ys, n);
            let mut out = Vec::with_capacity(m + 1);
            for (var, dir) in dirs.iter().enumerate() {
                let mut points = Vec::with_capacity(scales.len());
                for &level in &scales {
                    let rho = 2f64.powi(-(level as i32)) * half_max;
                    let (mut x, mut ys) = (s.x.clone(), s.ys.clone());
                    let target = if var == 0 { &mut x[..] } else { &mut ys[(var - 1) * n..var * n] };
                    for (t, d) in target.iter_mut().zip(dir) {
                        *t += rho * d;
                    }
                    let moved = k.eval_checked(&x, &ys)?;
                    let diff = (moved - base).abs();
                    if diff > 0.0 {
                        points.push((rho, diff * sum.powi(nm)));
                    }
                }
                // The exponent is read off the asymptotic regime, where the
                // displacement is small against every |x - y_i|.
                let (lx, ly): (Vec<f64>, Vec<f64>) = points
                    .iter()
                    .filter(|p| p.0 <= half_min)
                    .map(|p| (p.0.ln(), p.1.ln()))
                    .unzip();
                let slope = (lx.len() >= 3).then(|| fit_slope(&lx, &ly));
                out.push((slope, points));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut per_var: Vec<Option<f64>> = Vec::with_capacity(m + 1);
    for var in 0..=m {
        per_var.push(median(fits.iter().filter_map(|f| f[var].0).collect()));
    }
    let skipped = fits.iter().filter(|f| f.iter().any(|v| v.0.is_none())).count();
    let infinitely_smooth = fits.iter().all(|f| f.iter().all(|v| v.1.is_empty()));
    let delta = per_var.iter().flatten().copied().reduce(f64::min);
    let constant = delta.map(|d| {
        let mut best = 0.0f64;
        for (s, f) in samples.iter().zip(&fits) {
            let sum = sum_of_distances(&s.x, &s.ys, n);
            for (_, points) in f {
                for &(rho, scaled) in points {
                    best = best.max(scaled * (sum / rho).powf(d));
                }
            }
        }
        best
    });
    Ok(SmoothnessReport {
        delta_x: per_var[0],
        delta_y: per_var[1..].to_vec(),
        delta,
        constant,
        infinitely_smooth,
        scales: scales.len(),
        skipped_samples: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn homogeneous_values() {
        let k = KernelSpec::homogeneous(1, 2, 1.0).unwrap();
        assert_eq!(k.eval(&[1.0], &[0.0, 0.0]), 0.25);
        assert_eq!(k.eval(&[0.3], &[1.7, -2.0]), k.eval(&[0.3], &[-2.0, 1.7]));
        let k1 = KernelSpec::homogeneous(1, 1, 1.0).unwrap();
        assert_eq!(k1.eval(&[3.0], &[1.0]), 0.5);
        assert!(KernelSpec::homogeneous(1, 1, 0.0).is_err());
    }

    #[test]
    fn tensor_hilbert_values() {
        let k = KernelSpec::tensor_hilbert(1).unwrap();
        assert_relative_eq!(k.eval(&[2.0], &[0.5]), 1.0 / (PI * 1.5));
        let k = KernelSpec::tensor_hilbert(2).unwrap();
        assert_relative_eq!(k.eval(&[2.0], &[0.0, 1.0]), 0.050660, epsilon = 1e-6);
        let (x, y1, y2) = (0.7, -1.3, 2.2);
        assert_relative_eq!(k.eval(&[x], &[2.0 * x - y1, y2]), -k.eval(&[x], &[y1, y2]));
        assert_eq!(k.tensor_factor(), Some(1.0 / (PI * PI)));
    }

    #[test]
    fn riesz_values() {
        let k = KernelSpec::riesz(1, 2, 1).unwrap();
        assert_relative_eq!(k.eval(&[1.0], &[0.0, 0.0]), 0.353553, epsilon = 1e-6);
        let k = KernelSpec::riesz(2, 2, 3).unwrap();
        let x = [0.1, 0.2];
        let v = [0.5, -0.3, 0.7, 1.1];
        let plus: Vec<f64> = (0..4).map(|i| x[i % 2] + v[i]).collect();
        let minus: Vec<f64> = (0..4).map(|i| x[i % 2] - v[i]).collect();
        assert_relative_eq!(k.eval(&x, &plus), -k.eval(&x, &minus));
        assert!(KernelSpec::riesz(1, 2, 3).is_err());
    }

    #[test]
    fn by_name_rejects_unknown() {
        assert!(KernelSpec::by_name("poisson", 1, 1, 1.0, 1).is_err());
        assert!(KernelSpec::by_name("tensor-hilbert", 2, 1, 1.0, 1).is_err());
        assert_eq!(KernelSpec::by_name("riesz", 1, 2, 1.0, 2).unwrap().name(), "riesz");
    }

    #[test]
    fn size_check_homogeneous_and_scaling() {
        let cfg = SamplerConfig { samples: 500, ..Default::default() };
        let k = KernelSpec::homogeneous(2, 2, 1.0).unwrap();
        let r = check_size(&k, &cfg).unwrap();
        assert_relative_eq!(r.estimate, 1.0, max_relative = 8.0 * f64::EPSILON);
        let r2 = check_size(&k.scaled(2.0), &cfg).unwrap();
        assert_eq!(r2.estimate, 2.0 * r.estimate);
    }

    #[test]
    fn size_check_reports_nonfinite() {
        let eval: KernelFn = Arc::new(|_, _| f64::NAN);
        let b = Boundedness { known_bounded: false, norm: None, note: String::new() };
        let k = KernelSpec::custom("nan", 1, 1, eval, None, None, b).unwrap();
        assert!(matches!(check_size(&k, &SamplerConfig::default()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn smoothness_of_builtins() {
        let cfg = SamplerConfig { samples: 300, ..Default::default() };
        for k in [
            KernelSpec::homogeneous(1, 2, 1.0).unwrap(),
            KernelSpec::tensor_hilbert(2).unwrap(),
            KernelSpec::riesz(2, 2, 1).unwrap(),
        ] {
            let r = check_smoothness(&k, &cfg).unwrap();
            let dx = r.delta_x.unwrap();
            assert!((dx - 1.0).abs() < 0.05, "{} {r:?}", k.name());
            for dy in &r.delta_y {
                assert!((dy.unwrap() - dx).abs() < 0.05, "{} {r:?}", k.name());
            }
            assert!(r.constant.unwrap().is_finite());
        }
    }

    #[test]
    fn smoothness_of_zero_kernel() {
        let r = check_smoothness(&KernelSpec::zero(1, 2).unwrap(), &SamplerConfig::default()).unwrap();
        assert!(r.infinitely_smooth);
        assert_eq!(r.delta, None);
    }

    #[test]
    fn smoothness_needs_three_scales() {
        let cfg = SamplerConfig { k_min: 4, k_max: 5, ..Default::default() };
        let k = KernelSpec::homogeneous(1, 1, 1.0).unwrap();
        assert!(matches!(check_smoothness(&k, &cfg), Err(Error::DegenerateFit(_))));
    }
}
