//! Distance-to-size plausibility filtering.
//!
//! For each object class, a Gaussian-process regression learns how box
//! diameter (in pixels) varies with slant distance (in meters). A detection
//! is rejected when its diameter falls outside an accepted band around the
//! posterior mean. The band half-width is `k · σ(x) · λ(x)`, where σ is the
//! GP posterior standard deviation and λ widens the band wherever the
//! empirical spread of nearby training diameters is large relative to the
//! GP's own uncertainty.
//!
//! Outside the trained distance range (below half the minimum or above twice
//! the maximum training distance) the filter is pass-through: it never
//! discards what it has no evidence about.

use nalgebra::{DMatrix, DVector, Dyn};
use std::collections::BTreeMap;
use std::fmt;

/// Escalating diagonal jitter (as fractions of the kernel amplitude²) tried
/// before declaring the kernel matrix singular.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

/// Sample points used to average posterior σ across a spread window when the
/// precomputed grid does not cover it.
const WINDOW_SIGMA_SAMPLES: usize = 9;

/// Errors from fitting or loading a size model.
#[derive(Debug)]
pub enum SizeError {
    /// The filter configuration is invalid; the message names the field.
    InvalidConfig(String),
    /// A training point violates its invariants (non-finite or non-positive).
    InvalidPoint { class_id: u32, detail: String },
    /// A class has too few training points to fit.
    InsufficientData { class_id: u32, got: usize, need: usize },
    /// The kernel matrix stayed singular through the whole jitter ladder.
    SingularKernel { class_id: u32 },
    /// A persisted model could not be parsed.
    Malformed(String),
}

impl fmt::Display for SizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeError::InvalidConfig(msg) => write!(f, "invalid size filter config: {msg}"),
            SizeError::InvalidPoint { class_id, detail } => {
                write!(f, "invalid training point for class {class_id}: {detail}")
            }
            SizeError::InsufficientData { class_id, got, need } => write!(
                f,
                "class {class_id} has {got} training points, need at least {need}"
            ),
            SizeError::SingularKernel { class_id } => {
                write!(f, "kernel matrix for class {class_id} is singular even with jitter")
            }
            SizeError::Malformed(msg) => write!(f, "malformed size model: {msg}"),
        }
    }
}

impl std::error::Error for SizeError {}

/// One training observation: how large (box diagonal, pixels) an object of a
/// class appeared at a given slant distance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SizePoint {
    pub class_id: u32,
    pub distance_m: f64,
    pub diameter_px: f64,
}

/// Hyperparameters of the size filter.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SizeFilterConfig {
    /// Band half-width in scaled standard deviations (k).
    pub band_width_sigmas: f64,
    /// Half-width Δd of the window used to measure local diameter spread, m.
    pub spread_window_m: f64,
    /// Upper clamp λ_max on the band-widening factor.
    pub max_band_widening: f64,
    /// Squared-exponential kernel length scale ℓ, meters.
    pub length_scale_m: f64,
    /// Observation noise as a fraction of the kernel amplitude.
    pub noise_frac: f64,
    /// Minimum training points per class.
    pub min_train_points: usize,
    /// Cap on retained training points per class (cubic-cost guard).
    pub max_train_points: usize,
    /// Resolution of the precomputed band lookup grid.
    pub band_grid_points: usize,
}

impl Default for SizeFilterConfig {
    fn default() -> Self {
        SizeFilterConfig {
            band_width_sigmas: 1.5,
            spread_window_m: 5.0,
            max_band_widening: 5.0,
            length_scale_m: 10.0,
            noise_frac: 0.1,
            min_train_points: 10,
            max_train_points: 2000,
            band_grid_points: 1024,
        }
    }
}

impl SizeFilterConfig {
    pub fn validate(&self) -> Result<(), SizeError> {
        let bad = |msg: String| Err(SizeError::InvalidConfig(msg));
        if !(self.band_width_sigmas.is_finite() && self.band_width_sigmas > 0.0) {
            return bad(format!("band_width_sigmas {} must be > 0", self.band_width_sigmas));
        }
        if !(self.spread_window_m.is_finite() && self.spread_window_m > 0.0) {
            return bad(format!("spread_window_m {} must be > 0", self.spread_window_m));
        }
        if !(self.max_band_widening.is_finite() && self.max_band_widening >= 1.0) {
            return bad(format!("max_band_widening {} must be >= 1", self.max_band_widening));
        }
        if !(self.length_scale_m.is_finite() && self.length_scale_m > 0.0) {
            return bad(format!("length_scale_m {} must be > 0", self.length_scale_m));
        }
        if !(self.noise_frac.is_finite() && self.noise_frac > 0.0) {
            return bad(format!("noise_frac {} must be > 0", self.noise_frac));
        }
        if self.min_train_points < 2 {
            return bad(format!("min_train_points {} must be >= 2", self.min_train_points));
        }
        if self.max_train_points < self.min_train_points {
            return bad(format!(
                "max_train_points {} must be >= min_train_points {}",
                self.max_train_points, self.min_train_points
            ));
        }
        if self.band_grid_points < 2 {
            return bad(format!("band_grid_points {} must be >= 2", self.band_grid_points));
        }
        Ok(())
    }
}

/// Accepted diameter interval at one (class, distance). A pass-through band
/// is `[0, +∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeBand {
    pub min_px: f64,
    pub max_px: f64,
}

impl SizeBand {
    pub const PASS_THROUGH: SizeBand = SizeBand { min_px: 0.0, max_px: f64::INFINITY };

    pub fn contains(&self, diameter_px: f64) -> bool {
        diameter_px >= self.min_px && diameter_px <= self.max_px
    }
}

/// Fitted GP and band tables for one class.
#[derive(Debug, Clone)]
struct ClassModel {
    /// Retained training points, sorted by distance.
    train: Vec<(f64, f64)>,
    mean_diameter: f64,
    amplitude2: f64,
    noise2: f64,
    length_scale2: f64,
    /// K⁻¹·(y − mean), for posterior means.
    alpha: DVector<f64>,
    chol: nalgebra::Cholesky<f64, Dyn>,
    /// Distance range [min_d/2, 2·max_d] the model is willing to judge.
    domain: (f64, f64),
    grid_step: f64,
    /// Posterior σ at each grid node (pre-widening), plus its prefix sums for
    /// fast window averages.
    grid_sigma: Vec<f64>,
    sigma_prefix: Vec<f64>,
    /// Final accepted band (lo, hi) at each grid node.
    grid_band: Vec<(f64, f64)>,
}

impl ClassModel {
    fn kernel(&self, a: f64, b: f64) -> f64 {
        self.amplitude2 * (-(a - b).powi(2) / (2.0 * self.length_scale2)).exp()
    }

    fn cross_covariance(&self, x: f64) -> DVector<f64> {
        DVector::from_iterator(self.train.len(), self.train.iter().map(|&(d, _)| self.kernel(x, d)))
    }

    /// Exact GP posterior (mean, variance) of a new *observation* at x; the
    /// variance includes the observation noise so the band covers measured
    /// diameters, not just the latent function.
    fn posterior_mean_var(&self, x: f64) -> (f64, f64) {
        let kx = self.cross_covariance(x);
        let mean = self.mean_diameter + kx.dot(&self.alpha);
        let w = self.chol.solve(&kx);
        let var = (self.amplitude2 + self.noise2 - kx.dot(&w)).max(0.0);
        (mean, var)
    }

    /// Mean posterior σ over [x−Δd, x+Δd], averaged across the grid nodes in
    /// that window (falling back to direct sampling if none are inside).
    fn window_sigma_mean(&self, x: f64, half_width: f64) -> f64 {
        let lo = x - half_width;
        let hi = x + half_width;
        let g = self.grid_sigma.len();
        let first = ((lo - self.domain.0) / self.grid_step).ceil().max(0.0) as usize;
        let last_f = ((hi - self.domain.0) / self.grid_step).floor();
        if last_f >= first as f64 && first < g {
            let last = (last_f as usize).min(g - 1);
            let sum = self.sigma_prefix[last + 1] - self.sigma_prefix[first];
            return sum / (last + 1 - first) as f64;
        }
        // Window narrower than the grid pitch (or outside it): sample σ
        // directly at a few evenly spaced points.
        let mut sum = 0.0;
        for i in 0..WINDOW_SIGMA_SAMPLES {
            let t = i as f64 / (WINDOW_SIGMA_SAMPLES - 1) as f64;
            sum += self.posterior_mean_var(lo + t * (hi - lo)).1.sqrt();
        }
        sum / WINDOW_SIGMA_SAMPLES as f64
    }

    /// Band-widening factor λ(x): the local diameter spread of the training
    /// data divided by the width the unscaled band would have, clamped to
    /// [1, λ_max]. 1 when fewer than two training points fall in the window.
    fn widening(&self, x: f64, half_width: f64, lambda_max: f64) -> f64 {
        let lo = self.train.partition_point(|&(d, _)| d < x - half_width);
        let hi = self.train.partition_point(|&(d, _)| d <= x + half_width);
        if hi - lo < 2 {
            return 1.0;
        }
        let mut min_d = f64::INFINITY;
        let mut max_d = f64::NEG_INFINITY;
        for &(_, diam) in &self.train[lo..hi] {
            min_d = min_d.min(diam);
            max_d = max_d.max(diam);
        }
        let spread = max_d - min_d;
        if spread <= 0.0 {
            return 1.0;
        }
        (spread / (2.0 * self.window_sigma_mean(x, half_width))).clamp(1.0, lambda_max)
    }

    fn exact_band(&self, x: f64, config: &SizeFilterConfig) -> SizeBand {
        if x < self.domain.0 || x > self.domain.1 {
            return SizeBand::PASS_THROUGH;
        }
        let (mean, var) = self.posterior_mean_var(x);
        let lambda = self.widening(x, config.spread_window_m, config.max_band_widening);
        let half = config.band_width_sigmas * var.sqrt() * lambda;
        SizeBand { min_px: (mean - half).max(1.0), max_px: mean + half }
    }

    /// Band at x via the precomputed grid (linear interpolation). Used on the
    /// per-detection hot path; agrees with `exact_band` at grid nodes.
    fn grid_band(&self, x: f64) -> SizeBand {
        if x < self.domain.0 || x > self.domain.1 {
            return SizeBand::PASS_THROUGH;
        }
        let t = (x - self.domain.0) / self.grid_step;
        let i = (t.floor() as usize).min(self.grid_band.len() - 2);
        let frac = t - i as f64;
        let (lo0, hi0) = self.grid_band[i];
        let (lo1, hi1) = self.grid_band[i + 1];
        SizeBand {
            min_px: lo0 + frac * (lo1 - lo0),
            max_px: hi0 + frac * (hi1 - hi0),
        }
    }
}

/// Per-class distance-to-size model. Immutable after fitting; all queries are
/// pure, so a fitted model can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct SizeModel {
    config: SizeFilterConfig,
    classes: BTreeMap<u32, ClassModel>,
}

/// Serialized form: hyperparameters plus the retained training points.
/// Evaluation state is recomputed on load, so the file stays inspectable.
#[derive(serde::Serialize, serde::Deserialize)]
struct PersistedSizeModel {
    config: SizeFilterConfig,
    points: Vec<SizePoint>,
}

impl SizeModel {
    /// Fits one GP per class present in `points`.
    pub fn fit(points: &[SizePoint], config: SizeFilterConfig) -> Result<Self, SizeError> {
        config.validate()?;
        let mut by_class: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
        for p in points {
            if !(p.distance_m.is_finite() && p.distance_m > 0.0) {
                return Err(SizeError::InvalidPoint {
                    class_id: p.class_id,
                    detail: format!("distance_m {}", p.distance_m),
                });
            }
            if !(p.diameter_px.is_finite() && p.diameter_px > 0.0) {
                return Err(SizeError::InvalidPoint {
                    class_id: p.class_id,
                    detail: format!("diameter_px {}", p.diameter_px),
                });
            }
            by_class.entry(p.class_id).or_default().push((p.distance_m, p.diameter_px));
        }
        let mut classes = BTreeMap::new();
        for (class_id, mut train) in by_class {
            if train.len() < config.min_train_points {
                return Err(SizeError::InsufficientData {
                    class_id,
                    got: train.len(),
                    need: config.min_train_points,
                });
            }
            train.sort_by(|a, b| a.partial_cmp(b).expect("finite training points"));
            if train.len() > config.max_train_points {
                train = subsample_by_distance(&train, config.max_train_points);
            }
            classes.insert(class_id, fit_class(class_id, train, &config)?);
        }
        Ok(SizeModel { config, classes })
    }

    pub fn config(&self) -> &SizeFilterConfig {
        &self.config
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.classes.keys().copied()
    }

    /// Retained (possibly subsampled) training points across all classes.
    pub fn training_points(&self) -> Vec<SizePoint> {
        let mut out = Vec::new();
        for (&class_id, model) in &self.classes {
            out.extend(model.train.iter().map(|&(distance_m, diameter_px)| SizePoint {
                class_id,
                distance_m,
                diameter_px,
            }));
        }
        out
    }

    /// Exact accepted band at (class, distance). Pass-through for classes the
    /// model has never seen and for distances outside the trained range.
    pub fn accepted_band(&self, class_id: u32, distance_m: f64) -> SizeBand {
        match self.classes.get(&class_id) {
            Some(m) => m.exact_band(distance_m, &self.config),
            None => SizeBand::PASS_THROUGH,
        }
    }

    /// Fast accept test via the precomputed band grid.
    pub fn accepts(&self, class_id: u32, distance_m: f64, diameter_px: f64) -> bool {
        match self.classes.get(&class_id) {
            Some(m) => m.grid_band(distance_m).contains(diameter_px),
            None => true,
        }
    }

    /// Exact GP posterior (mean, variance) for tests and diagnostics.
    pub fn posterior_mean_var(&self, class_id: u32, distance_m: f64) -> Option<(f64, f64)> {
        self.classes.get(&class_id).map(|m| m.posterior_mean_var(distance_m))
    }

    pub fn to_json(&self) -> String {
        let persisted = PersistedSizeModel {
            config: self.config.clone(),
            points: self.training_points(),
        };
        serde_json::to_string_pretty(&persisted).expect("size model serialization cannot fail")
    }

    /// Rebuilds a model persisted by [`SizeModel::to_json`]. The stored points
    /// are already subsampled, so refitting reproduces the model exactly.
    pub fn from_json(json: &str) -> Result<Self, SizeError> {
        let persisted: PersistedSizeModel =
            serde_json::from_str(json).map_err(|e| SizeError::Malformed(e.to_string()))?;
        SizeModel::fit(&persisted.points, persisted.config)
    }
}

/// Keeps `keep` points, evenly spaced through the distance-sorted input, so
/// the retained set spans the full range with its original density profile.
fn subsample_by_distance(sorted: &[(f64, f64)], keep: usize) -> Vec<(f64, f64)> {
    let n = sorted.len();
    (0..keep)
        .map(|i| sorted[(i as f64 * (n - 1) as f64 / (keep - 1) as f64).round() as usize])
        .collect()
}

fn fit_class(
    class_id: u32,
    train: Vec<(f64, f64)>,
    config: &SizeFilterConfig,
) -> Result<ClassModel, SizeError> {
    let n = train.len();
    let mean_diameter = train.iter().map(|&(_, y)| y).sum::<f64>() / n as f64;
    let variance = train
        .iter()
        .map(|&(_, y)| (y - mean_diameter).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;
    let amplitude2 = variance.max(1e-12);
    let noise2 = config.noise_frac.powi(2) * amplitude2;
    let length_scale2 = config.length_scale_m.powi(2);

    let mut base = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = train[i].0 - train[j].0;
            base[(i, j)] = amplitude2 * (-d * d / (2.0 * length_scale2)).exp();
        }
        base[(i, i)] += noise2;
    }
    let mut chol = None;
    for &jitter_frac in &JITTER_LADDER {
        let mut k = base.clone();
        if jitter_frac > 0.0 {
            for i in 0..n {
                k[(i, i)] += jitter_frac * amplitude2;
            }
        }
        if let Some(c) = nalgebra::Cholesky::new(k) {
            chol = Some(c);
            break;
        }
    }
    let chol = chol.ok_or(SizeError::SingularKernel { class_id })?;

    let targets = DVector::from_iterator(n, train.iter().map(|&(_, y)| y - mean_diameter));
    let alpha = chol.solve(&targets);

    let min_d = train[0].0;
    let max_d = train[n - 1].0;
    let domain = (min_d / 2.0, max_d * 2.0);
    let g = config.band_grid_points;
    let grid_step = (domain.1 - domain.0) / (g - 1) as f64;

    let mut model = ClassModel {
        train,
        mean_diameter,
        amplitude2,
        noise2,
        length_scale2,
        alpha,
        chol,
        domain,
        grid_step,
        grid_sigma: Vec::new(),
        sigma_prefix: Vec::new(),
        grid_band: Vec::new(),
    };

    // Pass 1: posterior σ at every grid node, plus prefix sums so window
    // averages are O(1). Pass 2: the widened bands, which consume those
    // window averages.
    let mut grid_sigma = Vec::with_capacity(g);
    let mut grid_mean = Vec::with_capacity(g);
    for i in 0..g {
        let x = domain.0 + i as f64 * grid_step;
        let (m, v) = model.posterior_mean_var(x);
        grid_mean.push(m);
        grid_sigma.push(v.sqrt());
    }
    let mut sigma_prefix = Vec::with_capacity(g + 1);
    sigma_prefix.push(0.0);
    for &s in &grid_sigma {
        sigma_prefix.push(sigma_prefix.last().unwrap() + s);
    }
    model.grid_sigma = grid_sigma;
    model.sigma_prefix = sigma_prefix;

    let mut grid_band = Vec::with_capacity(g);
    for i in 0..g {
        let x = domain.0 + i as f64 * grid_step;
        let lambda = model.widening(x, config.spread_window_m, config.max_band_widening);
        let half = config.band_width_sigmas * model.grid_sigma[i] * lambda;
        grid_band.push(((grid_mean[i] - half).max(1.0), grid_mean[i] + half));
    }
    model.grid_band = grid_band;
    Ok(model)
}
