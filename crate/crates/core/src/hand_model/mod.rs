//! Parametric hand model: asset structure, forward kinematics via linear
//! blend skinning, bone geometry, synthetic asset generation, and the
//! model file format.
//!
//! The model follows the usual parametric-hand layout: 16 kinematic joints
//! (wrist plus three per finger), 10 shape blendshapes added to the
//! template, a row-stochastic joint regressor, and per-vertex skinning
//! weights. Pose-corrective blendshapes are not modeled. The 21-keypoint
//! convention is the 16 kinematic joints followed by the 5 fingertip
//! vertices, thumb first, little finger last.
//!
//! After skinning, the posed root joint is translated to the origin;
//! global translation lives exclusively in the camera model.

mod io;
mod synth;

pub use io::{load_model, save_model};
pub use synth::synth_model;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::rotation::{axis_angle_to_matrix, rot6d_to_matrix};

/// Kinematic joints in the tree (wrist + 3 per finger).
pub const JOINT_COUNT: usize = 16;
/// Non-root joints, i.e. the number of bones.
pub const BONE_COUNT: usize = JOINT_COUNT - 1;
/// Fingertip keypoints appended after the kinematic joints.
pub const FINGERTIP_COUNT: usize = 5;
/// Keypoints exposed per hand: kinematic joints plus fingertips.
pub const KEYPOINT_COUNT: usize = JOINT_COUNT + FINGERTIP_COUNT;
/// Shape blendshape coefficients.
pub const SHAPE_COUNT: usize = 10;

/// Joint-parent topology plus the fingertip vertex ids.
///
/// `parents[0]` is `None` (the root); every other joint's parent index is
/// strictly smaller than its own, so a single forward pass composes the
/// transforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KinematicTree {
    parents: Vec<Option<usize>>,
    fingertip_vertex_ids: Vec<usize>,
}

impl KinematicTree {
    pub fn new(parents: Vec<Option<usize>>, fingertip_vertex_ids: Vec<usize>) -> Result<Self> {
        if parents.len() != JOINT_COUNT {
            return Err(Error::InvalidAsset(format!(
                "expected {JOINT_COUNT} joints, got {}",
                parents.len()
            )));
        }
        if parents[0].is_some() {
            return Err(Error::InvalidAsset("joint 0 must be the root".into()));
        }
        for (j, parent) in parents.iter().enumerate().skip(1) {
            match parent {
                Some(p) if *p < j => {}
                Some(p) => {
                    return Err(Error::InvalidAsset(format!(
                        "joint {j} has parent {p} >= {j}; tree must be topologically ordered"
                    )));
                }
                None => {
                    return Err(Error::InvalidAsset(format!(
                        "joint {j} is a second root; exactly one root allowed"
                    )));
                }
            }
        }
        if fingertip_vertex_ids.len() != FINGERTIP_COUNT {
            return Err(Error::InvalidAsset(format!(
                "expected {FINGERTIP_COUNT} fingertip ids, got {}",
                fingertip_vertex_ids.len()
            )));
        }
        Ok(KinematicTree {
            parents,
            fingertip_vertex_ids,
        })
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn fingertip_vertex_ids(&self) -> &[usize] {
        &self.fingertip_vertex_ids
    }

    /// The MANO-like default: wrist root, then 3-joint chains per finger.
    pub fn standard(fingertip_vertex_ids: Vec<usize>) -> Result<Self> {
        let mut parents = vec![None];
        for finger in 0..5 {
            parents.push(Some(0));
            parents.push(Some(3 * finger + 1));
            parents.push(Some(3 * finger + 2));
        }
        KinematicTree::new(parents, fingertip_vertex_ids)
    }
}

/// Template mesh, regressor, skinning weights, shape basis, faces, and tree.
#[derive(Debug, Clone, PartialEq)]
pub struct HandModelAssets {
    /// V template vertex positions (meters).
    pub template: Vec<Vector3<f64>>,
    /// J x V row-stochastic regressor mapping vertices to joints.
    pub joint_regressor: Vec<Vec<f64>>,
    /// V x J skinning weights; each row sums to 1.
    pub skin_weights: Vec<Vec<f64>>,
    /// 10 per-coefficient V x 3 displacement fields.
    pub shape_basis: Vec<Vec<Vector3<f64>>>,
    /// F x 3 triangle vertex indices.
    pub faces: Vec<[usize; 3]>,
    pub tree: KinematicTree,
}

impl HandModelAssets {
    pub fn vertex_count(&self) -> usize {
        self.template.len()
    }

    /// Checks every structural invariant; called by the loaders and the
    /// synthetic generator.
    pub fn validate(&self) -> Result<()> {
        let v = self.template.len();
        if v == 0 {
            return Err(Error::InvalidAsset("empty template".into()));
        }
        if !self.template.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidAsset("non-finite template vertex".into()));
        }
        if self.joint_regressor.len() != JOINT_COUNT {
            return Err(Error::InvalidAsset(format!(
                "regressor has {} rows, expected {JOINT_COUNT}",
                self.joint_regressor.len()
            )));
        }
        for (j, row) in self.joint_regressor.iter().enumerate() {
            if row.len() != v {
                return Err(Error::InvalidAsset(format!(
                    "regressor row {j} has {} columns, expected {v}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidAsset(format!(
                    "regressor row {j} sums to {sum}, expected 1"
                )));
            }
        }
        if self.skin_weights.len() != v {
            return Err(Error::InvalidAsset(format!(
                "skin weights have {} rows, expected {v}",
                self.skin_weights.len()
            )));
        }
        for (i, row) in self.skin_weights.iter().enumerate() {
            if row.len() != JOINT_COUNT {
                return Err(Error::InvalidAsset(format!(
                    "skin weight row {i} has {} columns, expected {JOINT_COUNT}",
                    row.len()
                )));
            }
            if row.iter().any(|w| *w < 0.0) {
                return Err(Error::InvalidAsset(format!(
                    "skin weight row {i} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidAsset(format!(
                    "skin weight row {i} sums to {sum}, expected 1"
                )));
            }
        }
        if self.shape_basis.len() != SHAPE_COUNT {
            return Err(Error::InvalidAsset(format!(
                "shape basis has {} fields, expected {SHAPE_COUNT}",
                self.shape_basis.len()
            )));
        }
        for (k, field) in self.shape_basis.iter().enumerate() {
            if field.len() != v {
                return Err(Error::InvalidAsset(format!(
                    "shape field {k} has {} rows, expected {v}",
                    field.len()
                )));
            }
        }
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= v) {
                return Err(Error::InvalidAsset(format!(
                    "face {f} references a vertex outside 0..{v}"
                )));
            }
        }
        if self
            .tree
            .fingertip_vertex_ids()
            .iter()
            .any(|&id| id >= v)
        {
            return Err(Error::InvalidAsset(
                "fingertip vertex id outside vertex range".into(),
            ));
        }
        Ok(())
    }
}

/// Pose encoding tag for [`PoseParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseEncoding {
    AxisAngle,
    Rot6d,
}

impl PoseEncoding {
    pub fn values_per_joint(self) -> usize {
        match self {
            PoseEncoding::AxisAngle => 3,
            PoseEncoding::Rot6d => 6,
        }
    }

    pub fn total_len(self) -> usize {
        self.values_per_joint() * JOINT_COUNT
    }
}

/// 16 rotations (global orientation first) in one of two encodings:
/// axis-angle (48 values) or 6D (96 values).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    encoding: PoseEncoding,
    values: Vec<f64>,
}

impl PoseParams {
    pub fn new(encoding: PoseEncoding, values: Vec<f64>) -> Result<Self> {
        if values.len() != encoding.total_len() {
            return Err(Error::InvalidArgument(format!(
                "pose has {} values, expected {}",
                values.len(),
                encoding.total_len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pose parameters".into()));
        }
        Ok(PoseParams { encoding, values })
    }

    /// Identity (rest) pose in the requested encoding.
    pub fn identity(encoding: PoseEncoding) -> Self {
        let values = match encoding {
            PoseEncoding::AxisAngle => vec![0.0; 48],
            PoseEncoding::Rot6d => {
                let mut v = Vec::with_capacity(96);
                for _ in 0..JOINT_COUNT {
                    v.extend_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
                }
                v
            }
        };
        PoseParams { encoding, values }
    }

    pub fn encoding(&self) -> PoseEncoding {
        self.encoding
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn joint_values(&self, joint: usize) -> &[f64] {
        let n = self.encoding.values_per_joint();
        &self.values[joint * n..(joint + 1) * n]
    }

    /// Per-joint rotation matrices, global orientation first.
    pub fn rotation_matrices(&self) -> Result<Vec<Matrix3<f64>>> {
        (0..JOINT_COUNT)
            .map(|j| {
                let v = self.joint_values(j);
                match self.encoding {
                    PoseEncoding::AxisAngle => {
                        axis_angle_to_matrix(&Vector3::new(v[0], v[1], v[2]))
                    }
                    PoseEncoding::Rot6d => {
                        rot6d_to_matrix(&[v[0], v[1], v[2], v[3], v[4], v[5]])
                    }
                }
            })
            .collect()
    }
}

/// 10 shape blendshape coefficients (dimensionless).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    beta: [f64; SHAPE_COUNT],
}

impl ShapeParams {
    pub fn new(beta: [f64; SHAPE_COUNT]) -> Result<Self> {
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("shape parameters".into()));
        }
        Ok(ShapeParams { beta })
    }

    pub fn zeros() -> Self {
        ShapeParams {
            beta: [0.0; SHAPE_COUNT],
        }
    }

    pub fn from_slice(beta: &[f64]) -> Result<Self> {
        let arr: [f64; SHAPE_COUNT] = beta.try_into().map_err(|_| {
            Error::InvalidArgument(format!(
                "shape has {} coefficients, expected {SHAPE_COUNT}",
                beta.len()
            ))
        })?;
        ShapeParams::new(arr)
    }

    pub fn beta(&self) -> &[f64; SHAPE_COUNT] {
        &self.beta
    }
}

/// Posed mesh produced by [`forward_kinematics`].
#[derive(Debug, Clone, PartialEq)]
pub struct HandMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl HandMesh {
    /// Row-major flattening (x0, y0, z0, x1, ...) used by the PCA prior.
    pub fn flatten(&self) -> Vec<f64> {
        flatten_points(&self.vertices)
    }
}

pub fn flatten_points(points: &[Vector3<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * 3);
    for p in points {
        out.extend_from_slice(&[p.x, p.y, p.z]);
    }
    out
}

/// 21 keypoints: 16 kinematic joints then 5 fingertips, all in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPositions {
    joints: [Vector3<f64>; KEYPOINT_COUNT],
}

impl JointPositions {
    pub fn new(joints: [Vector3<f64>; KEYPOINT_COUNT]) -> Result<Self> {
        if !joints.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("joint positions".into()));
        }
        Ok(JointPositions { joints })
    }

    pub fn from_slice(joints: &[Vector3<f64>]) -> Result<Self> {
        let arr: [Vector3<f64>; KEYPOINT_COUNT] = joints.try_into().map_err(|_| {
            Error::InvalidArgument(format!(
                "expected {KEYPOINT_COUNT} keypoints, got {}",
                joints.len()
            ))
        })?;
        JointPositions::new(arr)
    }

    pub fn as_slice(&self) -> &[Vector3<f64>] {
        &self.joints
    }

    /// The 16 kinematic joints without the fingertips.
    pub fn kinematic(&self) -> &[Vector3<f64>] {
        &self.joints[..JOINT_COUNT]
    }

    pub fn wrist(&self) -> Vector3<f64> {
        self.joints[0]
    }
}

/// Poses the model: shape blendshapes, joint regression, rigid transform
/// composition along the tree, linear blend skinning, then translation of
/// the posed root joint to the origin.
pub fn forward_kinematics(
    assets: &HandModelAssets,
    pose: &PoseParams,
    shape: &ShapeParams,
) -> Result<(HandMesh, JointPositions)> {
    assets.validate()?;
    let v_count = assets.vertex_count();

    // Shaped template: template + sum_k beta_k * basis_k.
    let mut shaped = assets.template.clone();
    for (k, &beta) in shape.beta().iter().enumerate() {
        if beta == 0.0 {
            continue;
        }
        for (vertex, delta) in shaped.iter_mut().zip(&assets.shape_basis[k]) {
            *vertex += delta * beta;
        }
    }

    // Rest joints from the regressor.
    let mut rest_joints = [Vector3::zeros(); JOINT_COUNT];
    for (j, row) in assets.joint_regressor.iter().enumerate() {
        let mut acc = Vector3::zeros();
        for (w, vertex) in row.iter().zip(&shaped) {
            acc += vertex * *w;
        }
        rest_joints[j] = acc;
    }

    // Global transforms: each joint rotates about its rest position,
    // composed with its parent's transform.
    let rotations = pose.rotation_matrices()?;
    let mut global = [Matrix4::<f64>::identity(); JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        let local = rotation_about(&rotations[j], &rest_joints[j]);
        global[j] = match assets.tree.parent(j) {
            Some(p) => global[p] * local,
            None => local,
        };
    }

    // Posed joints: the local rotation fixes the joint itself, so apply
    // the parent transform (identity for the root).
    let mut posed_joints = [Vector3::zeros(); KEYPOINT_COUNT];
    for j in 0..JOINT_COUNT {
        let t = match assets.tree.parent(j) {
            Some(p) => &global[p],
            None => &global[j], // root transform fixes the root joint
        };
        posed_joints[j] = transform_point(t, &rest_joints[j]);
    }

    // Linear blend skinning.
    let mut vertices = Vec::with_capacity(v_count);
    for (vertex, weights) in shaped.iter().zip(&assets.skin_weights) {
        let mut acc = Vector3::zeros();
        for (j, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                acc += transform_point(&global[j], vertex) * w;
            }
        }
        vertices.push(acc);
    }

    // Fingertips come from the posed fingertip vertices.
    for (k, &id) in assets.tree.fingertip_vertex_ids().iter().enumerate() {
        posed_joints[JOINT_COUNT + k] = vertices[id];
    }

    // Root-at-origin convention.
    let root = posed_joints[0];
    for p in &mut vertices {
        *p -= root;
    }
    for p in &mut posed_joints {
        *p -= root;
    }

    let mesh = HandMesh {
        vertices,
        faces: assets.faces.clone(),
    };
    Ok((mesh, JointPositions::new(posed_joints)?))
}

/// Euclidean distance from each non-root kinematic joint to its parent,
/// in tree order (15 values).
pub fn bone_lengths(joints: &JointPositions, tree: &KinematicTree) -> [f64; BONE_COUNT] {
    let mut lengths = [0.0; BONE_COUNT];
    for j in 1..JOINT_COUNT {
        let p = tree.parent(j).expect("non-root joint has a parent");
        lengths[j - 1] = (joints.kinematic()[j] - joints.kinematic()[p]).norm();
    }
    lengths
}

fn rotation_about(r: &Matrix3<f64>, center: &Vector3<f64>) -> Matrix4<f64> {
    // x -> R (x - c) + c
    let t = center - r * center;
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

fn transform_point(m: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    Vector3::new(h.x, h.y, h.z)
}
