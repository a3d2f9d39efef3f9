//! Shape coefficients from contact poses: the vertices listed as touching in
//! each pinch should coincide once the reconstructed pose is applied.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{corrected_links, pose_from_link_rotations, CalibrationError, CalibrationResult, ReferenceCapture};
use crate::glove_sim::SegmentKind;
use crate::hand_model::{Finger, HandModel, PoseParams, ShapeParams, BETA_BOUND};

/// A pinch as reconstructed from the sensors, with its contact pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchCapture {
    pub finger: Finger,
    pub pose: PoseParams,
    pub pairs: Vec<(usize, usize)>,
}

/// Reconstructs the pose of every pinch capture with the given calibration.
pub fn pinch_captures(
    model: &HandModel,
    calib: &CalibrationResult,
    captures: &[ReferenceCapture],
) -> Result<Vec<PinchCapture>, CalibrationError> {
    let mut out = Vec::new();
    for cap in captures {
        let SegmentKind::Pinch(finger) = cap.kind else { continue };
        let preset = model.contacts().pinch(finger).ok_or_else(|| CalibrationError::UnknownReference(cap.kind.name()))?;
        let readings: Vec<_> = cap.orientations.iter().copied().map(Some).collect();
        let links = corrected_links(calib, &readings)?;
        out.push(PinchCapture { finger, pose: pose_from_link_rotations(model, &links), pairs: preset.pairs.clone() });
    }
    Ok(out)
}

/// Σ over captures and pairs of ‖v_j − v_k‖², mm².
pub fn shape_energy(model: &HandModel, beta: &ShapeParams, captures: &[PinchCapture]) -> Result<f64, CalibrationError> {
    let mut e = 0.0;
    for c in captures {
        for &(j, k) in &c.pairs {
            let d = model.vertex_position(beta, &c.pose, j)? - model.vertex_position(beta, &c.pose, k)?;
            e += d.norm_squared();
        }
    }
    Ok(e)
}

/// ∂E/∂β = Σ 2 (v_j − v_k)ᵀ (J_j − J_k).
pub fn shape_gradient(
    model: &HandModel,
    beta: &ShapeParams,
    captures: &[PinchCapture],
) -> Result<DVector<f64>, CalibrationError> {
    let mut g = DVector::zeros(model.shape_dim());
    for c in captures {
        for &(j, k) in &c.pairs {
            let d = model.vertex_position(beta, &c.pose, j)? - model.vertex_position(beta, &c.pose, k)?;
            let jac = model.vertex_jacobian_beta(beta, &c.pose, j)? - model.vertex_jacobian_beta(beta, &c.pose, k)?;
            g += jac.transpose() * d * 2.0;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeOptions {
    pub max_iterations: usize,
    /// Stop once the projected gradient is shorter than this, mm² per unit β.
    pub gradient_tolerance: f64,
    /// Stop once the last `stall_window` steps lowered the energy by less
    /// than `stall_fraction` of its value. A few contacts leave most of β
    /// unconstrained, and creeping further along the valley only moves β
    /// away from anything the pinches can confirm.
    pub stall_window: usize,
    pub stall_fraction: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            stall_window: 50,
            stall_fraction: 1e-2,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeResult {
    pub beta: ShapeParams,
    /// Final energy, mm².
    pub energy: f64,
    /// Energy at the start and after every accepted step.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

fn clip(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.clamp(-BETA_BOUND, BETA_BOUND))
}

fn params(v: &DVector<f64>) -> ShapeParams {
    ShapeParams::clipped(v.iter().copied().collect())
}

/// Projected gradient descent on the β box with a backtracking (Armijo) line
/// search. The first trial step is 1/‖∇E‖; later ones use the
/// Barzilai–Borwein length of the previous step.
pub fn calibrate_shape(
    model: &HandModel,
    captures: &[PinchCapture],
    beta0: &ShapeParams,
    options: &ShapeOptions,
) -> Result<ShapeResult, CalibrationError> {
    if captures.is_empty() {
        return Err(CalibrationError::NoCaptures);
    }
    model.skeleton().check_beta(beta0)?;
    let mut x = clip(&beta0.to_dvector());
    let mut e = shape_energy(model, &params(&x), captures)?;
    let mut g = shape_gradient(model, &params(&x), captures)?;
    let mut trace = vec![e];
    let mut previous: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;
    let projected_norm = |x: &DVector<f64>, g: &DVector<f64>| (x - clip(&(x - g))).norm();

    while iterations < options.max_iterations {
        if projected_norm(&x, &g) < options.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let gn = g.norm();
        let mut step = match &previous {
            Some((xp, gp)) => {
                let s = &x - xp;
                let y = &g - gp;
                let sy = s.dot(&y);
                if sy > 0.0 { s.norm_squared() / sy } else { 1.0 / gn }
            }
            None => 1.0 / gn,
        };
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let xn = clip(&(&x - &g * step));
            let en = shape_energy(model, &params(&xn), captures)?;
            if en <= e - options.armijo * g.dot(&(&x - &xn)) {
                accepted = Some((xn, en));
                break;
            }
            step *= options.shrink;
        }
        let Some((xn, en)) = accepted else { break };
        if xn == x {
            // projection pinned every moving coordinate; nothing left to do
            converged = true;
            break;
        }
        let gnew = shape_gradient(model, &params(&xn), captures)?;
        previous = Some((std::mem::replace(&mut x, xn), std::mem::replace(&mut g, gnew)));
        e = en;
        trace.push(e);
        if options.stall_window > 0 && trace.len() > options.stall_window {
            let before = trace[trace.len() - 1 - options.stall_window];
            if before - e < options.stall_fraction * e {
                converged = true;
                break;
            }
        }
    }
    if !converged && projected_norm(&x, &g) < options.gradient_tolerance {
        converged = true;
    }
    Ok(ShapeResult {
        beta: params(&x),
        energy: e,
        energy_trace: trace,
        iterations,
        gradient_norm: projected_norm(&x, &g),
        converged,
    })
}
