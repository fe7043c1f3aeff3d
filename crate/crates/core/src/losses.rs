//! Loss terms used by annotation fitting and reconstruction supervision:
//! landmark reprojection, biomechanical feasibility hinges, the PCA mesh
//! prior, and the reconstruction loss bundle.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::camera::{project_weak, WeakPerspectiveCamera};
use crate::container::{Container, Section};
use crate::error::{Error, Result};
use crate::hand_model::{
    bone_lengths, flatten_points, HandModelAssets, JointPositions, PoseEncoding, PoseParams,
    ShapeParams, BONE_COUNT, JOINT_COUNT,
};
use crate::rotation::matrix_to_axis_angle;

pub const PRIOR_FORMAT: &str = "prior";
pub const RANGES_FORMAT: &str = "ranges";

/// Mean L1 distance between projected and detected landmarks over the
/// visible ones; 0 when nothing is visible.
pub fn reprojection_loss(
    projected: &[Vector2<f64>],
    detected: &[Vector2<f64>],
    visibility: &[bool],
) -> Result<f64> {
    if projected.len() != detected.len() || projected.len() != visibility.len() {
        return Err(Error::InvalidArgument(format!(
            "landmark shape mismatch: {} projected, {} detected, {} visibility",
            projected.len(),
            detected.len(),
            visibility.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, d), &vis) in projected.iter().zip(detected).zip(visibility) {
        if vis {
            sum += (p.x - d.x).abs() + (p.y - d.y).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}

/// Feasible intervals for bone lengths (meters) and per-joint, per-axis
/// rotation components (radians) over the 15 articulated joints.
#[derive(Debug, Clone, PartialEq)]
pub struct BmcRanges {
    pub bone_min: [f64; BONE_COUNT],
    pub bone_max: [f64; BONE_COUNT],
    pub angle_min: [[f64; 3]; BONE_COUNT],
    pub angle_max: [[f64; 3]; BONE_COUNT],
}

impl BmcRanges {
    pub fn validate(&self) -> Result<()> {
        for j in 0..BONE_COUNT {
            if self.bone_min[j] <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "bone_min[{j}] must be positive"
                )));
            }
            if self.bone_min[j] > self.bone_max[j] {
                return Err(Error::InvalidArgument(format!(
                    "bone range {j} has min > max"
                )));
            }
            for c in 0..3 {
                if self.angle_min[j][c] > self.angle_max[j][c] {
                    return Err(Error::InvalidArgument(format!(
                        "angle range ({j},{c}) has min > max"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Default ranges derived from the model's rest geometry: each bone may
    /// vary by +/-25% of its rest length, each rotation component by up to
    /// a quarter turn either way.
    pub fn from_rest_geometry(assets: &HandModelAssets) -> Result<Self> {
        let (_, joints) = crate::hand_model::forward_kinematics(
            assets,
            &PoseParams::identity(PoseEncoding::AxisAngle),
            &ShapeParams::zeros(),
        )?;
        let rest = bone_lengths(&joints, &assets.tree);
        let mut bone_min = [0.0; BONE_COUNT];
        let mut bone_max = [0.0; BONE_COUNT];
        for j in 0..BONE_COUNT {
            bone_min[j] = rest[j] * 0.75;
            bone_max[j] = rest[j] * 1.25;
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        Ok(BmcRanges {
            bone_min,
            bone_max,
            angle_min: [[-half_pi; 3]; BONE_COUNT],
            angle_max: [[half_pi; 3]; BONE_COUNT],
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(RANGES_FORMAT);
        c.push(Section::new("BONE_MIN", 1, BONE_COUNT, self.bone_min.to_vec()));
        c.push(Section::new("BONE_MAX", 1, BONE_COUNT, self.bone_max.to_vec()));
        c.push(Section::new(
            "ANGLE_MIN",
            BONE_COUNT,
            3,
            self.angle_min.iter().flatten().copied().collect(),
        ));
        c.push(Section::new(
            "ANGLE_MAX",
            BONE_COUNT,
            3,
            self.angle_max.iter().flatten().copied().collect(),
        ));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_format(RANGES_FORMAT)?;
        let read_bones = |name: &str| -> Result<[f64; BONE_COUNT]> {
            let s = c.section(name)?;
            s.values.as_slice().try_into().map_err(|_| {
                Error::InvalidArgument(format!("section {name} must hold {BONE_COUNT} values"))
            })
        };
        let read_angles = |name: &str| -> Result<[[f64; 3]; BONE_COUNT]> {
            let s = c.section(name)?;
            if s.rows != BONE_COUNT || s.cols != 3 {
                return Err(Error::InvalidArgument(format!(
                    "section {name} must be {BONE_COUNT} x 3"
                )));
            }
            let mut out = [[0.0; 3]; BONE_COUNT];
            for j in 0..BONE_COUNT {
                out[j].copy_from_slice(s.row(j));
            }
            Ok(out)
        };
        let ranges = BmcRanges {
            bone_min: read_bones("BONE_MIN")?,
            bone_max: read_bones("BONE_MAX")?,
            angle_min: read_angles("ANGLE_MIN")?,
            angle_max: read_angles("ANGLE_MAX")?,
        };
        ranges.validate()?;
        Ok(ranges)
    }
}

fn hinge_sq(value: f64, min: f64, max: f64) -> f64 {
    let below = (min - value).max(0.0);
    let above = (value - max).max(0.0);
    below * below + above * above
}

/// Quadratic hinge on each bone length outside its feasible interval.
pub fn bone_length_loss(lengths: &[f64; BONE_COUNT], ranges: &BmcRanges) -> f64 {
    let mut total = 0.0;
    for j in 0..BONE_COUNT {
        total += hinge_sq(lengths[j], ranges.bone_min[j], ranges.bone_max[j]);
    }
    total
}

/// Quadratic hinge on each articulated rotation component outside its
/// feasible interval. The global orientation (joint 0) is unconstrained.
///
/// Axis-angle poses are read componentwise; 6D poses are decomposed
/// through the log map first, which fails near half-turn ambiguity.
pub fn joint_angle_loss(pose: &PoseParams, ranges: &BmcRanges) -> Result<f64> {
    let mut total = 0.0;
    match pose.encoding() {
        PoseEncoding::AxisAngle => {
            for j in 1..JOINT_COUNT {
                let v = pose.joint_values(j);
                for c in 0..3 {
                    total += hinge_sq(v[c], ranges.angle_min[j - 1][c], ranges.angle_max[j - 1][c]);
                }
            }
        }
        PoseEncoding::Rot6d => {
            let matrices = pose.rotation_matrices()?;
            for (j, m) in matrices.iter().enumerate().skip(1) {
                let aa = matrix_to_axis_angle(m)?;
                for c in 0..3 {
                    total += hinge_sq(aa[c], ranges.angle_min[j - 1][c], ranges.angle_max[j - 1][c]);
                }
            }
        }
    }
    Ok(total)
}

/// PCA mesh prior: orthonormal row basis over flattened 3V meshes plus the
/// mean mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaPrior {
    basis: DMatrix<f64>,
    mean: DVector<f64>,
}

impl PcaPrior {
    pub fn new(basis: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        if basis.ncols() != mean.len() {
            return Err(Error::InvalidArgument(format!(
                "basis has {} columns but mean has {} entries",
                basis.ncols(),
                mean.len()
            )));
        }
        if !mean.iter().all(|v| v.is_finite()) || !basis.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pca prior".into()));
        }
        let gram = &basis * basis.transpose();
        let d = basis.nrows();
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - expect).abs() > 1e-8 {
                    return Err(Error::InvalidArgument(
                        "basis rows are not orthonormal".into(),
                    ));
                }
            }
        }
        Ok(PcaPrior { basis, mean })
    }

    pub fn component_count(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(PRIOR_FORMAT);
        c.push(Section::new(
            "MEAN",
            1,
            self.mean.len(),
            self.mean.iter().copied().collect(),
        ));
        let mut values = Vec::with_capacity(self.basis.nrows() * self.basis.ncols());
        for row in self.basis.row_iter() {
            values.extend(row.iter().copied());
        }
        c.push(Section::new("BASIS", self.basis.nrows(), self.basis.ncols(), values));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_format(PRIOR_FORMAT)?;
        let mean_section = c.section("MEAN")?;
        let mean = DVector::from_column_slice(&mean_section.values);
        let basis_section = c.section("BASIS")?;
        let basis = DMatrix::from_row_slice(
            basis_section.rows,
            basis_section.cols,
            &basis_section.values,
        );
        PcaPrior::new(basis, mean)
    }
}

/// Fits a [`PcaPrior`] by eigendecomposition of the sample covariance.
///
/// The mean is arithmetic; basis rows are the top-`d` principal directions
/// in descending eigenvalue order, each unit norm with its
/// largest-magnitude entry made positive.
pub fn pca_fit(meshes: &[Vec<f64>], d: usize) -> Result<PcaPrior> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    if meshes.len() < d + 1 {
        return Err(Error::RankDeficiency(format!(
            "need at least {} meshes for d = {d}, got {}",
            d + 1,
            meshes.len()
        )));
    }
    let dim = meshes[0].len();
    if dim == 0 || meshes.iter().any(|m| m.len() != dim) {
        return Err(Error::InvalidArgument(
            "meshes must share a common nonzero dimension".into(),
        ));
    }
    let n = meshes.len();
    let mut mean = DVector::zeros(dim);
    for mesh in meshes {
        mean += DVector::from_column_slice(mesh);
    }
    mean /= n as f64;

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for mesh in meshes {
        let centered = DVector::from_column_slice(mesh) - &mean;
        cov += &centered * centered.transpose();
    }
    cov /= n as f64;

    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).unwrap());

    let max_eig = eigen.eigenvalues[order[0]].max(0.0);
    let mut basis = DMatrix::zeros(d, dim);
    for k in 0..d {
        let idx = order[k];
        let eig = eigen.eigenvalues[idx];
        if eig <= (max_eig * 1e-9).max(1e-18) {
            return Err(Error::RankDeficiency(format!(
                "sample covariance has rank < {d} (eigenvalue {k} = {eig:.3e})"
            )));
        }
        let mut column = eigen.eigenvectors.column(idx).clone_owned();
        column /= column.norm();
        // Deterministic sign: largest-magnitude entry positive.
        let dominant = column
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if column[dominant] < 0.0 {
            column = -column;
        }
        basis.row_mut(k).copy_from(&column.transpose());
    }
    PcaPrior::new(basis, mean)
}

/// Out-of-subspace residual norm `|X - ([(X - mu) U^T] U + mu)|_2`.
pub fn pca_prior_loss(mesh: &[f64], prior: &PcaPrior) -> Result<f64> {
    if mesh.len() != prior.dim() {
        return Err(Error::InvalidArgument(format!(
            "mesh has {} values but prior expects {}",
            mesh.len(),
            prior.dim()
        )));
    }
    let x = DVector::from_column_slice(mesh);
    let centered = &x - prior.mean();
    let coeffs = prior.basis() * &centered;
    let reconstructed = prior.basis().transpose() * coeffs + prior.mean();
    Ok((x - reconstructed).norm())
}

/// One named term of a [`LossBreakdown`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub id: String,
    pub value: f64,
    pub weight: f64,
    /// False when the term's supervision was absent and it contributed 0.
    pub active: bool,
}

/// Named loss terms plus their weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    terms: Vec<LossTerm>,
    total: f64,
}

impl LossBreakdown {
    pub fn new(terms: Vec<LossTerm>) -> Self {
        let total = terms.iter().map(|t| t.weight * t.value).sum();
        LossBreakdown { terms, total }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn terms(&self) -> &[LossTerm] {
        &self.terms
    }

    pub fn term(&self, id: &str) -> Option<&LossTerm> {
        self.terms.iter().find(|t| t.id == id)
    }

    pub fn value(&self, id: &str) -> f64 {
        self.term(id).map_or(0.0, |t| t.value)
    }
}

/// Optional ground-truth side of [`recon_losses`].
#[derive(Debug, Clone, Default)]
pub struct ReconTargets<'a> {
    pub mesh_vertices: Option<&'a [nalgebra::Vector3<f64>]>,
    pub joints2d: Option<&'a [Vector2<f64>]>,
    pub params: Option<(&'a PoseParams, &'a ShapeParams)>,
    /// Opaque discriminator score; the adversarial term is `(score - 1)^2`.
    pub d_score: Option<f64>,
}

/// Reconstruction losses: mean-element L1 on vertices, mean-element L1 on
/// weak-perspective projected joints, squared parameter distance in
/// axis-angle encoding, and the adversarial score term. Absent targets
/// contribute 0 and are flagged inactive.
pub fn recon_losses(
    pred_mesh_vertices: &[nalgebra::Vector3<f64>],
    pred_joints: &JointPositions,
    cam: &WeakPerspectiveCamera,
    pred_params: (&PoseParams, &ShapeParams),
    targets: &ReconTargets,
) -> Result<LossBreakdown> {
    if targets.mesh_vertices.is_none()
        && targets.joints2d.is_none()
        && targets.params.is_none()
        && targets.d_score.is_none()
    {
        return Err(Error::EmptySupervision);
    }

    let mut terms = Vec::with_capacity(4);

    let loss_3d = match targets.mesh_vertices {
        Some(gt) => {
            if gt.len() != pred_mesh_vertices.len() {
                return Err(Error::InvalidArgument(format!(
                    "vertex counts differ: {} vs {}",
                    pred_mesh_vertices.len(),
                    gt.len()
                )));
            }
            let flat_pred = flatten_points(pred_mesh_vertices);
            let flat_gt = flatten_points(gt);
            let sum: f64 = flat_pred
                .iter()
                .zip(&flat_gt)
                .map(|(a, b)| (a - b).abs())
                .sum();
            Some(sum / flat_pred.len() as f64)
        }
        None => None,
    };
    terms.push(term("loss_3d", loss_3d));

    let loss_2d = match targets.joints2d {
        Some(gt) => {
            if gt.len() != pred_joints.as_slice().len() {
                return Err(Error::InvalidArgument(format!(
                    "2D joint counts differ: {} vs {}",
                    pred_joints.as_slice().len(),
                    gt.len()
                )));
            }
            let projected = project_weak(pred_joints.as_slice(), cam);
            let sum: f64 = projected
                .iter()
                .zip(gt)
                .map(|(p, g)| (p.x - g.x).abs() + (p.y - g.y).abs())
                .sum();
            Some(sum / (2 * gt.len()) as f64)
        }
        None => None,
    };
    terms.push(term("loss_2d", loss_2d));

    let loss_mano = match targets.params {
        Some((gt_pose, gt_shape)) => {
            let pred_aa = pose_axis_angle_values(pred_params.0)?;
            let gt_aa = pose_axis_angle_values(gt_pose)?;
            let pose_sq: f64 = pred_aa
                .iter()
                .zip(&gt_aa)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let shape_sq: f64 = pred_params
                .1
                .beta()
                .iter()
                .zip(gt_shape.beta())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Some(pose_sq + shape_sq)
        }
        None => None,
    };
    terms.push(term("loss_mano", loss_mano));

    let loss_adv = targets.d_score.map(|score| (score - 1.0) * (score - 1.0));
    terms.push(term("loss_adv", loss_adv));

    Ok(LossBreakdown::new(terms))
}

fn term(id: &str, value: Option<f64>) -> LossTerm {
    LossTerm {
        id: id.to_string(),
        value: value.unwrap_or(0.0),
        weight: 1.0,
        active: value.is_some(),
    }
}

fn pose_axis_angle_values(pose: &PoseParams) -> Result<Vec<f64>> {
    match pose.encoding() {
        PoseEncoding::AxisAngle => Ok(pose.values().to_vec()),
        PoseEncoding::Rot6d => {
            let mut out = Vec::with_capacity(48);
            for m in pose.rotation_matrices()? {
                let aa = matrix_to_axis_angle(&m)?;
                out.extend_from_slice(&[aa.x, aa.y, aa.z]);
            }
            Ok(out)
        }
    }
}
