//! Geodesic paths in latent space.
//!
//! A path is a fixed-endpoint sequence of latent points; its objective is
//! the total length of the decoded image sequence,
//! `sum_n ||g(z_n) - g(z_n+1)||`. Planning initializes the straight latent
//! line and repeatedly sweeps the interior points in ascending order, moving
//! each against the gradient of its two adjacent segment lengths
//! (Gauss–Seidel style: updates within a sweep are visible to later points).
//!
//! The objective after each accepted sweep is recorded. A sweep that
//! *increases* the objective (beyond 1e-12) is rolled back and the run is
//! flagged as having too large a step size, so the recorded history is
//! always non-increasing and instability is surfaced, never silently kept.
//!
//! Stability: within a sweep, each point's move perturbs the next point's
//! gradient with gain roughly `alpha * s_max^2 / r`, where `s_max` bounds
//! the decoder Jacobian and `r` is the decoded segment length. For the
//! identity decoder this reduces to `alpha * (points - 1) / |z_end -
//! z_start|`; the default step of 0.05 is stable whenever the endpoints
//! are farther apart than `alpha * (points - 1)`. Sharply trained decoders
//! need smaller steps; the guard flags any run where the step was too
//! large.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The generative map `g` from latent space to image space, with an exact
/// vector-Jacobian product for gradient-based planning.
pub trait Decoder {
    fn latent_dim(&self) -> usize;
    fn image_dim(&self) -> usize;
    fn decode(&self, z: &[f64]) -> Vec<f64>;
    /// `J(z)^T v` where `J` is the Jacobian of `decode` at `z`.
    fn decode_vjp(&self, z: &[f64], cotangent: &[f64]) -> Vec<f64>;
}

/// `decode(z) = z`; its geodesics are straight lines, which makes it the
/// reference case for planner tests.
#[derive(Debug, Clone, Copy)]
pub struct IdentityDecoder {
    pub dim: usize,
}

impl Decoder for IdentityDecoder {
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn image_dim(&self) -> usize {
        self.dim
    }

    fn decode(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    fn decode_vjp(&self, _z: &[f64], cotangent: &[f64]) -> Vec<f64> {
        cotangent.to_vec()
    }
}

/// Ordered latent points with fixed endpoints. The first and last points are
/// never modified after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    points: Vec<Vec<f64>>,
    length_history: Vec<f64>,
    step_too_large: bool,
}

impl LatentPath {
    /// Wraps an existing point sequence (at least one point, equal dims).
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("points", "path needs at least one point"));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Shape("path points must share one nonzero dimension".into()));
        }
        Ok(LatentPath {
            points,
            length_history: Vec::new(),
            step_too_large: false,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Objective value after the initial straight line and after each
    /// accepted refinement sweep.
    pub fn length_history(&self) -> &[f64] {
        &self.length_history
    }

    /// True when a sweep increased the objective and was rolled back: the
    /// configured step size is too large for this decoder.
    pub fn step_too_large(&self) -> bool {
        self.step_too_large
    }
}

/// Planner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Number of path points including both endpoints.
    pub points: usize,
    /// Gradient step size.
    pub alpha: f64,
    pub max_sweeps: usize,
    /// Stop once a sweep decreases the objective by less than this.
    pub tol: f64,
    /// Segments whose decoded length falls below this contribute no
    /// gradient (the degenerate-segment subgradient choice).
    pub norm_eps: f64,
    /// Optimize summed squared segment lengths instead of plain lengths
    /// (sensitivity switch; the default objective is the plain norm).
    pub squared_norms: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            points: 50,
            alpha: 0.05,
            max_sweeps: 500,
            tol: 1e-6,
            norm_eps: 1e-12,
            squared_norms: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::config("points", "need at least 2 path points"));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::config("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if self.tol < 0.0 {
            return Err(Error::config("tol", "must be nonnegative"));
        }
        if self.norm_eps.is_nan() || self.norm_eps <= 0.0 {
            return Err(Error::config("norm_eps", "must be positive"));
        }
        Ok(())
    }
}

fn check_endpoint_dims(z_start: &[f64], z_end: &[f64]) -> Result<()> {
    if z_start.len() != z_end.len() || z_start.is_empty() {
        return Err(Error::Shape(format!(
            "endpoints have dimensions {} and {}",
            z_start.len(),
            z_end.len()
        )));
    }
    Ok(())
}

fn check_decoder_dim(path_dim: usize, decoder: &dyn Decoder) -> Result<()> {
    if decoder.latent_dim() != path_dim {
        return Err(Error::config(
            "decoder",
            format!(
                "decoder latent dim {} does not match path dim {}",
                decoder.latent_dim(),
                path_dim
            ),
        ));
    }
    Ok(())
}

/// Evenly spaced points on the latent segment from `z_start` to `z_end`.
/// The endpoints are copied bitwise.
pub fn init_straight_path(z_start: &[f64], z_end: &[f64], n: usize) -> Result<LatentPath> {
    check_endpoint_dims(z_start, z_end)?;
    if n < 2 {
        return Err(Error::config("points", format!("need at least 2, got {n}")));
    }
    let mut points = Vec::with_capacity(n);
    points.push(z_start.to_vec());
    for i in 1..n - 1 {
        let t = i as f64 / (n - 1) as f64;
        points.push(
            z_start
                .iter()
                .zip(z_end)
                .map(|(&a, &b)| a + t * (b - a))
                .collect(),
        );
    }
    points.push(z_end.to_vec());
    LatentPath::from_points(points)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn segment_objective(a: &[f64], b: &[f64], squared: bool) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    if squared {
        sq
    } else {
        sq.sqrt()
    }
}

fn decoded_objective(decoded: &[Vec<f64>], squared: bool) -> f64 {
    decoded
        .windows(2)
        .map(|w| segment_objective(&w[0], &w[1], squared))
        .sum()
}

/// Total decoded length of a path: the sum of unsquared Euclidean norms of
/// consecutive decoded-image differences.
pub fn path_length(path: &LatentPath, decoder: &dyn Decoder) -> Result<f64> {
    check_decoder_dim(path.dim(), decoder)?;
    let decoded: Vec<Vec<f64>> = path.points().iter().map(|z| decoder.decode(z)).collect();
    Ok(decoded_objective(&decoded, false))
}

/// Gradient with respect to `z` of
/// `||g(z) - g(z_prev)|| + ||g(z) - g(z_next)||`, pulled back through the
/// decoder's exact vector-Jacobian product. A segment whose decoded length
/// is below `norm_eps` contributes zero.
pub fn local_gradient(
    z_prev: &[f64],
    z: &[f64],
    z_next: &[f64],
    decoder: &dyn Decoder,
    norm_eps: f64,
) -> Vec<f64> {
    let g_prev = decoder.decode(z_prev);
    let g = decoder.decode(z);
    let g_next = decoder.decode(z_next);
    let cot = middle_point_cotangent(&g_prev, &g, &g_next, norm_eps, false);
    decoder.decode_vjp(z, &cot)
}

/// dObjective/d(g(z)) for the two segments touching the middle point.
fn middle_point_cotangent(
    g_prev: &[f64],
    g: &[f64],
    g_next: &[f64],
    norm_eps: f64,
    squared: bool,
) -> Vec<f64> {
    let mut cot = vec![0.0; g.len()];
    for neighbor in [g_prev, g_next] {
        let diff: Vec<f64> = g.iter().zip(neighbor).map(|(a, b)| a - b).collect();
        if squared {
            // d/dg ||g - n||^2 = 2 (g - n)
            for (c, d) in cot.iter_mut().zip(&diff) {
                *c += 2.0 * d;
            }
        } else {
            let len = norm(&diff);
            if len >= norm_eps {
                for (c, d) in cot.iter_mut().zip(&diff) {
                    *c += d / len;
                }
            }
        }
    }
    cot
}

/// Plans a geodesic between two latent points: straight-line init, then
/// in-place interior sweeps of `z <- z - alpha * local_gradient` until the
/// objective stops improving by `tol`, `max_sweeps` is hit, or a sweep
/// regresses (which rolls back and flags the step size).
pub fn plan_geodesic(
    z_start: &[f64],
    z_end: &[f64],
    decoder: &dyn Decoder,
    cfg: &PlannerConfig,
) -> Result<LatentPath> {
    cfg.validate()?;
    check_endpoint_dims(z_start, z_end)?;
    check_decoder_dim(z_start.len(), decoder)?;

    let mut path = init_straight_path(z_start, z_end, cfg.points)?;
    let mut decoded: Vec<Vec<f64>> =
        path.points.iter().map(|z| decoder.decode(z)).collect();
    let mut objective = decoded_objective(&decoded, cfg.squared_norms);
    path.length_history.push(objective);

    let n = path.points.len();
    for sweep in 0..cfg.max_sweeps {
        if n < 3 {
            break;
        }
        let saved_points: Vec<Vec<f64>> = path.points[1..n - 1].to_vec();
        let saved_decoded: Vec<Vec<f64>> = decoded[1..n - 1].to_vec();

        for i in 1..n - 1 {
            let cot = middle_point_cotangent(
                &decoded[i - 1],
                &decoded[i],
                &decoded[i + 1],
                cfg.norm_eps,
                cfg.squared_norms,
            );
            let grad = decoder.decode_vjp(&path.points[i], &cot);
            for (zj, gj) in path.points[i].iter_mut().zip(&grad) {
                *zj -= cfg.alpha * gj;
            }
            if path.points[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::Planning {
                    sweep,
                    index: i,
                    message: "point became non-finite".to_string(),
                });
            }
            decoded[i] = decoder.decode(&path.points[i]);
        }

        let new_objective = decoded_objective(&decoded, cfg.squared_norms);
        if new_objective > objective + 1e-12 {
            // Overshoot: undo the sweep and surface the problem.
            path.points[1..n - 1].clone_from_slice(&saved_points);
            decoded[1..n - 1].clone_from_slice(&saved_decoded);
            path.step_too_large = true;
            break;
        }
        let decrease = objective - new_objective;
        objective = new_objective;
        path.length_history.push(objective);
        if decrease < cfg.tol {
            break;
        }
    }
    Ok(path)
}

/// Writes a path as text: a `# latentpath v1 N=<n> J=<j>` header, then one
/// line per point with J space-separated doubles at 17 significant digits.
pub fn save_path(path: &LatentPath, file: &Path) -> Result<()> {
    let mut text = format!("# latentpath v1 N={} J={}\n", path.len(), path.dim());
    for point in path.points() {
        let mut line = String::new();
        for (i, v) in point.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{v:.16e}").expect("write to String cannot fail");
        }
        text.push_str(&line);
        text.push('\n');
    }
    crate::fsio::write_atomic(file, text.as_bytes())
}

pub fn load_path(file: &Path) -> Result<LatentPath> {
    let name = file.display().to_string();
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(name.clone(), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::malformed(&name, "empty file"))?;
    let rest = header
        .strip_prefix("# latentpath v1 ")
        .ok_or_else(|| Error::BadMagic {
            path: name.clone(),
            expected: "# latentpath v1".to_string(),
        })?;
    let mut n = None;
    let mut j = None;
    for token in rest.split_whitespace() {
        if let Some(v) = token.strip_prefix("N=") {
            n = v.parse::<usize>().ok();
        } else if let Some(v) = token.strip_prefix("J=") {
            j = v.parse::<usize>().ok();
        }
    }
    let (n, j) = match (n, j) {
        (Some(n), Some(j)) => (n, j),
        _ => return Err(Error::malformed(&name, "header missing N= or J=")),
    };

    let mut points = Vec::with_capacity(n);
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let point: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::malformed(&name, format!("unparseable point on line {}", lineno + 2)))?;
        if point.len() != j {
            return Err(Error::malformed(
                &name,
                format!("line {} has {} values, expected {j}", lineno + 2, point.len()),
            ));
        }
        points.push(point);
    }
    if points.len() != n {
        return Err(Error::malformed(
            &name,
            format!("header declares {n} points, found {}", points.len()),
        ));
    }
    LatentPath::from_points(points)
}
