//! Landmark fitting: packs camera, pose, and shape parameters into a flat
//! vector, evaluates the weighted objective (reprojection + biomechanical
//! hinges + PCA prior), and minimizes it with a staged first-order
//! optimizer using central-difference gradients.
//!
//! The optimizer runs each stage as Adam-style moment-normalized descent
//! with backtracking: a proposed step is halved until the objective
//! strictly decreases, and the stage stops when no improving step exists
//! or the improvement falls below the convergence tolerance. Internally
//! each stage optimizes rescaled coordinates (camera entries divided by
//! init-derived magnitudes) so that all blocks move at comparable rates;
//! the packed public representation is always raw parameter values.

use nalgebra::{Vector2, Vector3};

use crate::camera::{
    project_perspective, project_weak, IntrinsicCamera, WeakPerspectiveCamera,
};
use crate::error::{Error, Result};
use crate::hand_model::{
    bone_lengths, forward_kinematics, HandModelAssets, PoseEncoding, PoseParams, ShapeParams,
    KEYPOINT_COUNT, SHAPE_COUNT,
};
use crate::losses::{
    bone_length_loss, joint_angle_loss, pca_prior_loss, reprojection_loss, BmcRanges, PcaPrior,
};

/// Step used for the optimizer's internal central differences.
pub const DEFAULT_GRAD_EPS: f64 = 1e-6;
const MAX_BACKTRACK: usize = 30;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// 21 detected 2D landmarks with per-landmark visibility and the optional
/// intrinsics that switch fitting to the perspective camera model.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: [Vector2<f64>; KEYPOINT_COUNT],
    visibility: [bool; KEYPOINT_COUNT],
    intrinsics: Option<IntrinsicCamera>,
}

impl LandmarkSet {
    pub fn new(
        points: [Vector2<f64>; KEYPOINT_COUNT],
        visibility: [bool; KEYPOINT_COUNT],
        intrinsics: Option<IntrinsicCamera>,
    ) -> Result<Self> {
        if !points.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::NonFinite("landmarks".into()));
        }
        Ok(LandmarkSet {
            points,
            visibility,
            intrinsics,
        })
    }

    pub fn points(&self) -> &[Vector2<f64>; KEYPOINT_COUNT] {
        &self.points
    }

    pub fn visibility(&self) -> &[bool; KEYPOINT_COUNT] {
        &self.visibility
    }

    pub fn intrinsics(&self) -> Option<&IntrinsicCamera> {
        self.intrinsics.as_ref()
    }

    pub fn visible_count(&self) -> usize {
        self.visibility.iter().filter(|v| **v).count()
    }

    fn visible_bbox(&self) -> Option<(Vector2<f64>, Vector2<f64>)> {
        let mut min = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for (p, &vis) in self.points.iter().zip(&self.visibility) {
            if vis {
                min.x = min.x.min(p.x);
                min.y = min.y.min(p.y);
                max.x = max.x.max(p.x);
                max.y = max.y.max(p.y);
                any = true;
            }
        }
        any.then_some((min, max))
    }
}

/// Objective term weights; all must be non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWeights {
    pub proj: f64,
    pub bmc: f64,
    pub prior: f64,
}

impl Default for FitWeights {
    fn default() -> Self {
        FitWeights {
            proj: 1.0,
            bmc: 1.0,
            prior: 1.0,
        }
    }
}

/// Which parameter blocks a stage optimizes. Packing order is fixed:
/// camera (3), global orientation (3), articulated pose (45), shape (10).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSpec {
    pub camera: bool,
    pub global_orient: bool,
    pub articulated: bool,
    pub shape: bool,
}

impl StageSpec {
    pub fn all() -> Self {
        StageSpec {
            camera: true,
            global_orient: true,
            articulated: true,
            shape: true,
        }
    }

    pub fn camera_and_orientation() -> Self {
        StageSpec {
            camera: true,
            global_orient: true,
            articulated: false,
            shape: false,
        }
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        if self.camera {
            n += 3;
        }
        if self.global_orient {
            n += 3;
        }
        if self.articulated {
            n += 45;
        }
        if self.shape {
            n += SHAPE_COUNT;
        }
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub weights: FitWeights,
    /// Iteration budget per stage.
    pub max_iters: usize,
    pub step_size: f64,
    /// Stop a stage once an accepted step improves by less than this.
    pub convergence_tol: f64,
    pub stage_schedule: Vec<StageSpec>,
    /// Recorded for provenance; the fit itself is deterministic.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            weights: FitWeights::default(),
            max_iters: 500,
            step_size: 1e-2,
            convergence_tol: 1e-9,
            stage_schedule: vec![StageSpec::camera_and_orientation(), StageSpec::all()],
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig("step_size must be positive".into()));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::InvalidConfig(
                "convergence_tol must be positive".into(),
            ));
        }
        for w in [self.weights.proj, self.weights.bmc, self.weights.prior] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(
                    "weights must be non-negative and finite".into(),
                ));
            }
        }
        if self.stage_schedule.is_empty() || self.stage_schedule.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidConfig(
                "stage schedule must contain non-empty stages".into(),
            ));
        }
        Ok(())
    }
}

/// Camera model being fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum CameraKind {
    Weak,
    Perspective(IntrinsicCamera),
}

/// Fitted camera in [`FitResult`].
#[derive(Debug, Clone, PartialEq)]
pub enum FitCamera {
    Weak(WeakPerspectiveCamera),
    Perspective {
        intrinsics: IntrinsicCamera,
        translation: Vector3<f64>,
    },
}

/// Full parameter state in optimizer layout. For the weak camera the
/// camera block is (scale, tx, ty); for the perspective camera it is the
/// 3D translation (tx, ty, tz). Pose is always axis-angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub camera: [f64; 3],
    pub pose: [f64; 48],
    pub shape: [f64; SHAPE_COUNT],
}

impl ParamState {
    pub fn pack(&self, stage: StageSpec) -> Vec<f64> {
        let mut out = Vec::with_capacity(stage.len());
        if stage.camera {
            out.extend_from_slice(&self.camera);
        }
        if stage.global_orient {
            out.extend_from_slice(&self.pose[..3]);
        }
        if stage.articulated {
            out.extend_from_slice(&self.pose[3..]);
        }
        if stage.shape {
            out.extend_from_slice(&self.shape);
        }
        out
    }

    pub fn unpack(&self, stage: StageSpec, packed: &[f64]) -> Result<ParamState> {
        if packed.len() != stage.len() {
            return Err(Error::InvalidArgument(format!(
                "packed vector has {} values but the stage layout needs {}",
                packed.len(),
                stage.len()
            )));
        }
        let mut state = self.clone();
        let mut at = 0;
        if stage.camera {
            state.camera.copy_from_slice(&packed[at..at + 3]);
            at += 3;
        }
        if stage.global_orient {
            state.pose[..3].copy_from_slice(&packed[at..at + 3]);
            at += 3;
        }
        if stage.articulated {
            state.pose[3..].copy_from_slice(&packed[at..at + 45]);
            at += 45;
        }
        if stage.shape {
            state.shape.copy_from_slice(&packed[at..at + SHAPE_COUNT]);
        }
        Ok(state)
    }
}

/// Everything the objective needs besides the parameters themselves.
#[derive(Debug, Clone)]
pub struct FitProblem<'a> {
    pub landmarks: &'a LandmarkSet,
    pub assets: &'a HandModelAssets,
    pub prior: Option<&'a PcaPrior>,
    pub ranges: Option<&'a BmcRanges>,
    pub camera_kind: CameraKind,
    pub weights: FitWeights,
}

impl FitProblem<'_> {
    /// Weighted objective at a full parameter state.
    pub fn evaluate(&self, state: &ParamState) -> Result<f64> {
        let pose = PoseParams::new(PoseEncoding::AxisAngle, state.pose.to_vec())?;
        let shape = ShapeParams::new(state.shape)?;
        let (mesh, joints) = forward_kinematics(self.assets, &pose, &shape)?;

        let projected = match &self.camera_kind {
            CameraKind::Weak => {
                let cam = WeakPerspectiveCamera::new(
                    state.camera[0],
                    Vector2::new(state.camera[1], state.camera[2]),
                )?;
                project_weak(joints.as_slice(), &cam)
            }
            CameraKind::Perspective(intrinsics) => {
                let t = Vector3::new(state.camera[0], state.camera[1], state.camera[2]);
                let shifted: Vec<Vector3<f64>> =
                    joints.as_slice().iter().map(|p| p + t).collect();
                project_perspective(&shifted, intrinsics)?
            }
        };

        let mut total = self.weights.proj
            * reprojection_loss(&projected, self.landmarks.points(), self.landmarks.visibility())?;
        if let Some(ranges) = self.ranges {
            if self.weights.bmc != 0.0 {
                let lengths = bone_lengths(&joints, &self.assets.tree);
                total += self.weights.bmc
                    * (bone_length_loss(&lengths, ranges) + joint_angle_loss(&pose, ranges)?);
            }
        }
        if let Some(prior) = self.prior {
            if self.weights.prior != 0.0 {
                total += self.weights.prior * pca_prior_loss(&mesh.flatten(), prior)?;
            }
        }
        Ok(total)
    }

    /// Projected keypoints and reprojection loss at a state; used by the
    /// CLI report and by tests.
    pub fn reprojection_at(&self, state: &ParamState) -> Result<f64> {
        let only_proj = FitProblem {
            weights: FitWeights {
                proj: 1.0,
                bmc: 0.0,
                prior: 0.0,
            },
            ..self.clone()
        };
        only_proj.evaluate(state)
    }
}

/// Objective over a packed stage vector overlaid on a base state.
pub fn objective(
    problem: &FitProblem,
    stage: StageSpec,
    base: &ParamState,
    packed: &[f64],
) -> Result<f64> {
    let state = base.unpack(stage, packed)?;
    problem.evaluate(&state)
}

/// Central differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`.
///
/// A non-finite evaluation reports the offending coordinate.
pub fn numeric_gradient<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        probe[i] = x[i] - eps;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation { index: i });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Identity pose, zero shape, and a camera seeded from the ratio of the
/// 2D landmark bounding box to the rest-pose keypoint bounding box.
pub fn initialize_fit(landmarks: &LandmarkSet, assets: &HandModelAssets) -> Result<ParamState> {
    let visible = landmarks.visible_count();
    if visible < 4 {
        return Err(Error::InsufficientLandmarks {
            visible,
            needed: 4,
        });
    }
    let (min2, max2) = landmarks
        .visible_bbox()
        .expect("visible_count >= 4 implies a bbox");
    let diag2 = (max2 - min2).norm();
    if diag2 < 1e-9 {
        return Err(Error::DegenerateLandmarks(
            "all visible landmarks coincide".into(),
        ));
    }

    let (_, rest) = forward_kinematics(
        assets,
        &PoseParams::identity(PoseEncoding::AxisAngle),
        &ShapeParams::zeros(),
    )?;
    // Use only the rest keypoints corresponding to visible landmarks so the
    // 2D and 3D extents describe the same point set.
    let subset: Vec<Vector3<f64>> = rest
        .as_slice()
        .iter()
        .zip(landmarks.visibility())
        .filter(|(_, &vis)| vis)
        .map(|(p, _)| *p)
        .collect();
    let mut min3 = Vector3::from_element(f64::INFINITY);
    let mut max3 = Vector3::from_element(f64::NEG_INFINITY);
    let mut centroid3 = Vector3::zeros();
    for p in &subset {
        for c in 0..3 {
            min3[c] = min3[c].min(p[c]);
            max3[c] = max3[c].max(p[c]);
        }
        centroid3 += p;
    }
    centroid3 /= subset.len() as f64;
    let diag3 = (max3 - min3).norm();
    if diag3 < 1e-12 {
        return Err(Error::Initialization(
            "rest keypoints of the visible subset are degenerate".into(),
        ));
    }

    let mut centroid2 = Vector2::zeros();
    for (p, &vis) in landmarks.points().iter().zip(landmarks.visibility()) {
        if vis {
            centroid2 += p;
        }
    }
    centroid2 /= visible as f64;

    let camera = match landmarks.intrinsics() {
        None => {
            let scale = diag2 / diag3;
            [
                scale,
                centroid2.x - scale * centroid3.x,
                centroid2.y - scale * centroid3.y,
            ]
        }
        Some(k) => {
            let depth = k.fx * diag3 / diag2;
            [
                depth * (centroid2.x - k.cx) / k.fx - centroid3.x,
                depth * (centroid2.y - k.cy) / k.fy - centroid3.y,
                depth - centroid3.z,
            ]
        }
    };

    Ok(ParamState {
        camera,
        pose: [0.0; 48],
        shape: [0.0; SHAPE_COUNT],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub pose: PoseParams,
    pub shape: ShapeParams,
    pub camera: FitCamera,
    /// Initial objective followed by the value after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
}

/// Fits from the default initialization.
pub fn fit_hand(
    landmarks: &LandmarkSet,
    assets: &HandModelAssets,
    prior: Option<&PcaPrior>,
    ranges: Option<&BmcRanges>,
    config: &FitConfig,
) -> Result<FitResult> {
    let init = initialize_fit(landmarks, assets)?;
    fit_hand_from(landmarks, assets, prior, ranges, config, init)
}

/// Fits from an explicit initial state.
pub fn fit_hand_from(
    landmarks: &LandmarkSet,
    assets: &HandModelAssets,
    prior: Option<&PcaPrior>,
    ranges: Option<&BmcRanges>,
    config: &FitConfig,
    init: ParamState,
) -> Result<FitResult> {
    config.validate()?;
    let visible = landmarks.visible_count();
    if visible < 4 {
        return Err(Error::InsufficientLandmarks {
            visible,
            needed: 4,
        });
    }
    let camera_kind = match landmarks.intrinsics() {
        Some(k) => CameraKind::Perspective(*k),
        None => CameraKind::Weak,
    };
    let problem = FitProblem {
        landmarks,
        assets,
        prior,
        ranges,
        camera_kind: camera_kind.clone(),
        weights: config.weights,
    };

    let mut state = init;
    let initial = problem.evaluate(&state).unwrap_or(f64::INFINITY);
    if !initial.is_finite() {
        return Err(Error::Initialization(format!(
            "objective is not finite at the initial parameters ({initial})"
        )));
    }

    // Per-coordinate magnitudes: camera entries move by hundreds of pixels,
    // pose and shape by order one. The optimizer works in divided
    // coordinates so a single step size fits every block.
    let extent = landmarks
        .visible_bbox()
        .map(|(min, max)| (max - min).norm())
        .unwrap_or(1.0)
        .max(1.0);
    let camera_scales = match camera_kind {
        CameraKind::Weak => [state.camera[0].abs().max(1.0), extent, extent],
        CameraKind::Perspective(_) => {
            let depth = state.camera[2].abs().max(0.1);
            [depth, depth, depth]
        }
    };

    let mut trace = vec![initial];
    let mut current = initial;
    let mut iterations_used = 0usize;
    let mut converged = false;

    for &stage in &config.stage_schedule {
        let mut coord_scales = Vec::with_capacity(stage.len());
        if stage.camera {
            coord_scales.extend_from_slice(&camera_scales);
        }
        for _ in coord_scales.len()..stage.len() {
            coord_scales.push(1.0);
        }

        // Scaled coordinates: y_i = x_i / c_i.
        let mut y: Vec<f64> = state
            .pack(stage)
            .iter()
            .zip(&coord_scales)
            .map(|(x, c)| x / c)
            .collect();
        let to_raw = |y: &[f64]| -> Vec<f64> {
            y.iter().zip(&coord_scales).map(|(v, c)| v * c).collect()
        };

        let mut m = vec![0.0; y.len()];
        let mut v = vec![0.0; y.len()];
        let mut moment_step = 0i32;
        converged = false;
        // Stage termination: several consecutive sub-tolerance improvements,
        // or repeated failure to find any improving step even after
        // resetting the momentum to plain normalized gradient descent.
        let mut small_steps = 0usize;
        let mut rejected_directions = 0usize;

        for _ in 1..=config.max_iters {
            iterations_used += 1;
            let base = state.clone();
            let eval_scaled = |yy: &[f64]| -> f64 {
                objective(&problem, stage, &base, &to_raw(yy)).unwrap_or(f64::INFINITY)
            };
            let grad = numeric_gradient(&eval_scaled, &y, DEFAULT_GRAD_EPS)?;

            moment_step += 1;
            let mut direction = vec![0.0; y.len()];
            let bias1 = 1.0 - ADAM_BETA1.powi(moment_step);
            let bias2 = 1.0 - ADAM_BETA2.powi(moment_step);
            for i in 0..y.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                direction[i] = (m[i] / bias1) / ((v[i] / bias2).sqrt() + ADAM_EPS);
            }

            let mut alpha = config.step_size;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACK {
                let candidate: Vec<f64> = y
                    .iter()
                    .zip(&direction)
                    .map(|(yi, di)| yi - alpha * di)
                    .collect();
                let value = eval_scaled(&candidate);
                if value < current {
                    accepted = Some((candidate, value));
                    break;
                }
                alpha /= 2.0;
            }
            let Some((candidate, value)) = accepted else {
                rejected_directions += 1;
                if rejected_directions >= 3 {
                    converged = true;
                    break;
                }
                // Drop stale momentum and retry from the raw gradient.
                m.iter_mut().for_each(|x| *x = 0.0);
                v.iter_mut().for_each(|x| *x = 0.0);
                moment_step = 0;
                continue;
            };
            rejected_directions = 0;
            let improvement = current - value;
            y = candidate;
            current = value;
            state = state.unpack(stage, &to_raw(&y))?;
            trace.push(value);
            if improvement < config.convergence_tol {
                small_steps += 1;
                if small_steps >= 8 {
                    converged = true;
                    break;
                }
            } else {
                small_steps = 0;
            }
        }
    }

    let pose = PoseParams::new(PoseEncoding::AxisAngle, state.pose.to_vec())?;
    let shape = ShapeParams::new(state.shape)?;
    let camera = match camera_kind {
        CameraKind::Weak => FitCamera::Weak(WeakPerspectiveCamera::new(
            state.camera[0],
            Vector2::new(state.camera[1], state.camera[2]),
        )?),
        CameraKind::Perspective(intrinsics) => FitCamera::Perspective {
            intrinsics,
            translation: Vector3::new(state.camera[0], state.camera[1], state.camera[2]),
        },
    };
    Ok(FitResult {
        pose,
        shape,
        camera,
        objective_trace: trace,
        converged,
        iterations_used,
    })
}
