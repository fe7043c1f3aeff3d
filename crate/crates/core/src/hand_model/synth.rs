//! Seeded synthetic hand model generation.
//!
//! Produces a license-free stand-in with the same structure as a real
//! parametric hand asset: a 16-joint tree (wrist plus three joints per
//! finger), a row-stochastic joint regressor, smooth skinning weights,
//! and 10 mutually orthogonal shape displacement fields. The template is
//! translated so the regressed root joint sits exactly at the origin, and
//! each shape field is corrected so it does not move the regressed root.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{HandModelAssets, KinematicTree, FINGERTIP_COUNT, JOINT_COUNT, SHAPE_COUNT};
use crate::error::{Error, Result};

const MIN_VERTICES: usize = 30;

/// Deterministically generates a valid [`HandModelAssets`] for `seed`.
pub fn synth_model(seed: u64, vertex_count: usize) -> Result<HandModelAssets> {
    if vertex_count < MIN_VERTICES {
        return Err(Error::InvalidArgument(format!(
            "vertex_count must be at least {MIN_VERTICES}, got {vertex_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Scaffold skeleton: wrist at the origin, five 3-joint finger chains
    // fanned out in the xy plane with mild z variation.
    let mut scaffold = vec![Vector3::zeros(); JOINT_COUNT];
    let mut tips = [Vector3::zeros(); FINGERTIP_COUNT];
    for finger in 0..5 {
        let phi = -0.6 + 0.3 * finger as f64 + rng.random_range(-0.04..0.04);
        let z = rng.random_range(-0.008..0.008);
        let dir = Vector3::new(phi.sin(), phi.cos(), z).normalize();
        let radii = [
            0.045 + rng.random_range(-0.004..0.004),
            0.077 + rng.random_range(-0.004..0.004),
            0.099 + rng.random_range(-0.004..0.004),
        ];
        for (step, &r) in radii.iter().enumerate() {
            scaffold[3 * finger + 1 + step] = dir * r;
        }
        tips[finger] = dir * (radii[2] + 0.018);
    }

    // Bone segments used to scatter vertices: every parent-child bone plus
    // the last-joint-to-tip extension of each finger.
    let mut segments = Vec::new();
    for finger in 0..5 {
        segments.push((Vector3::zeros(), scaffold[3 * finger + 1]));
        segments.push((scaffold[3 * finger + 1], scaffold[3 * finger + 2]));
        segments.push((scaffold[3 * finger + 2], scaffold[3 * finger + 3]));
        segments.push((scaffold[3 * finger + 3], tips[finger]));
    }

    let shaft_count = vertex_count - FINGERTIP_COUNT;
    let mut template = Vec::with_capacity(vertex_count);
    for _ in 0..shaft_count {
        let (a, b) = segments[rng.random_range(0..segments.len())];
        let t = rng.random_range(0.05..0.95);
        let radius = rng.random_range(0.004..0.012);
        let offset = random_unit(&mut rng) * radius;
        template.push(a + (b - a) * t + offset);
    }
    // Fingertip vertices occupy the last five slots.
    let fingertip_ids: Vec<usize> = (shaft_count..vertex_count).collect();
    template.extend_from_slice(&tips);

    // Row-stochastic regressor: Gaussian kernel around each scaffold joint.
    let joint_regressor = kernel_rows(&scaffold, &template, 0.012);

    // Shift the template so the regressed root lands exactly at the origin.
    let mut root = Vector3::zeros();
    for (w, v) in joint_regressor[0].iter().zip(&template) {
        root += v * *w;
    }
    for v in &mut template {
        *v -= root;
    }

    // Rest joints implied by the regressor, used for the skinning kernel.
    let mut rest_joints = vec![Vector3::zeros(); JOINT_COUNT];
    for (j, row) in joint_regressor.iter().enumerate() {
        for (w, v) in row.iter().zip(&template) {
            rest_joints[j] += v * *w;
        }
    }
    // Smooth skinning: one normalized kernel row per vertex over the joints.
    let skin_weights = kernel_rows(&template, &rest_joints, 0.015);

    let shape_basis = shape_fields(&mut rng, &template, &joint_regressor[0]);

    let faces: Vec<[usize; 3]> = (0..vertex_count - 2).map(|i| [i, i + 1, i + 2]).collect();

    let assets = HandModelAssets {
        template,
        joint_regressor,
        skin_weights,
        shape_basis,
        faces,
        tree: KinematicTree::standard(fingertip_ids)?,
    };
    assets.validate()?;
    Ok(assets)
}

/// One normalized Gaussian-kernel row per center over the given points.
fn kernel_rows(centers: &[Vector3<f64>], points: &[Vector3<f64>], sigma: f64) -> Vec<Vec<f64>> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    centers
        .iter()
        .map(|c| {
            let d2: Vec<f64> = points.iter().map(|p| (p - c).norm_squared()).collect();
            let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
            let mut row: Vec<f64> = d2.iter().map(|d| (-(d - min) * inv).exp()).collect();
            let sum: f64 = row.iter().sum();
            for w in &mut row {
                *w /= sum;
            }
            row
        })
        .collect()
}

/// Ten smooth sinusoidal displacement fields, corrected so the regressed
/// root does not move, then Gram-Schmidt orthonormalized over the
/// flattened 3V space and scaled to centimeter magnitude.
fn shape_fields(
    rng: &mut ChaCha8Rng,
    template: &[Vector3<f64>],
    root_regressor: &[f64],
) -> Vec<Vec<Vector3<f64>>> {
    let v_count = template.len();
    let mut flat_fields: Vec<Vec<f64>> = Vec::with_capacity(SHAPE_COUNT);
    while flat_fields.len() < SHAPE_COUNT {
        let mut field = vec![Vector3::zeros(); v_count];
        for coord in 0..3 {
            let freq = Vector3::new(
                rng.random_range(-25.0..25.0),
                rng.random_range(-25.0..25.0),
                rng.random_range(-25.0..25.0),
            );
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(0.3..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            for (value, p) in field.iter_mut().zip(template) {
                value[coord] = amp * (freq.dot(p) + phase).sin();
            }
        }
        // Remove the uniform translation that would move the regressed root.
        let mut drift = Vector3::zeros();
        for (w, d) in root_regressor.iter().zip(&field) {
            drift += d * *w;
        }
        for d in &mut field {
            *d -= drift;
        }

        let mut flat: Vec<f64> = field.iter().flat_map(|d| [d.x, d.y, d.z]).collect();
        for prev in &flat_fields {
            let dot: f64 = flat.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (f, p) in flat.iter_mut().zip(prev) {
                *f -= dot * p;
            }
        }
        let norm: f64 = flat.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // linearly dependent draw; try again
        }
        for f in &mut flat {
            *f /= norm;
        }
        flat_fields.push(flat);
    }

    flat_fields
        .into_iter()
        .map(|flat| {
            (0..v_count)
                .map(|i| Vector3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]) * 0.01)
                .collect()
        })
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}
