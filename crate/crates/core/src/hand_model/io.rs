//! Model asset file format.
//!
//! A `HANDKIT model v1` container with sections TEMPLATE (V x 3),
//! REGRESSOR (J x V), WEIGHTS (V x J), `SHAPE_BASIS k` (V x 3, k = 0..9),
//! FACES (F x 3), TREE (1 x J, parent indices with -1 for the root), and
//! TIPS (1 x 5, fingertip vertex ids).

use std::path::Path;

use nalgebra::Vector3;

use super::{HandModelAssets, KinematicTree, JOINT_COUNT, SHAPE_COUNT};
use crate::container::{Container, Section};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "model";

pub fn save_model(assets: &HandModelAssets, path: impl AsRef<Path>) -> Result<()> {
    model_to_container(assets).save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<HandModelAssets> {
    model_from_container(&Container::load(path)?)
}

pub fn model_to_container(assets: &HandModelAssets) -> Container {
    let v = assets.vertex_count();
    let mut c = Container::new(MODEL_FORMAT);
    c.push(Section::new(
        "TEMPLATE",
        v,
        3,
        points_to_values(&assets.template),
    ));
    c.push(Section::new(
        "REGRESSOR",
        JOINT_COUNT,
        v,
        assets.joint_regressor.iter().flatten().copied().collect(),
    ));
    c.push(Section::new(
        "WEIGHTS",
        v,
        JOINT_COUNT,
        assets.skin_weights.iter().flatten().copied().collect(),
    ));
    for (k, field) in assets.shape_basis.iter().enumerate() {
        c.push(Section::new(
            format!("SHAPE_BASIS {k}"),
            v,
            3,
            points_to_values(field),
        ));
    }
    c.push(Section::new(
        "FACES",
        assets.faces.len(),
        3,
        assets
            .faces
            .iter()
            .flat_map(|f| f.iter().map(|&i| i as f64))
            .collect(),
    ));
    c.push(Section::new(
        "TREE",
        1,
        JOINT_COUNT,
        assets
            .tree
            .parents()
            .iter()
            .map(|p| p.map_or(-1.0, |i| i as f64))
            .collect(),
    ));
    c.push(Section::new(
        "TIPS",
        1,
        assets.tree.fingertip_vertex_ids().len(),
        assets
            .tree
            .fingertip_vertex_ids()
            .iter()
            .map(|&i| i as f64)
            .collect(),
    ));
    c
}

pub fn model_from_container(c: &Container) -> Result<HandModelAssets> {
    c.expect_format(MODEL_FORMAT)?;
    let template = values_to_points(c.section("TEMPLATE")?)?;
    let v = template.len();

    let regressor_section = c.section("REGRESSOR")?;
    let joint_regressor = section_rows(regressor_section);
    let weights_section = c.section("WEIGHTS")?;
    let skin_weights = section_rows(weights_section);

    let mut shape_basis = Vec::with_capacity(SHAPE_COUNT);
    for k in 0..SHAPE_COUNT {
        let name = format!("SHAPE_BASIS {k}");
        shape_basis.push(values_to_points(c.section(&name)?)?);
    }

    let faces_section = c.section("FACES")?;
    let mut faces = Vec::with_capacity(faces_section.rows);
    for row in 0..faces_section.rows {
        let mut face = [0usize; 3];
        for (col, slot) in face.iter_mut().enumerate() {
            let idx = faces_section.integer(row, col)?;
            if idx < 0 {
                return Err(Error::InvalidAsset(format!(
                    "face {row} has a negative vertex index"
                )));
            }
            *slot = idx as usize;
        }
        faces.push(face);
    }

    let tree_section = c.section("TREE")?;
    let mut parents = Vec::with_capacity(tree_section.cols);
    for col in 0..tree_section.cols {
        let p = tree_section.integer(0, col)?;
        parents.push(if p < 0 { None } else { Some(p as usize) });
    }
    let tips_section = c.section("TIPS")?;
    let mut tips = Vec::with_capacity(tips_section.cols);
    for col in 0..tips_section.cols {
        let id = tips_section.integer(0, col)?;
        if id < 0 || id as usize >= v {
            return Err(Error::InvalidAsset(format!(
                "fingertip id {id} outside vertex range 0..{v}"
            )));
        }
        tips.push(id as usize);
    }

    let assets = HandModelAssets {
        template,
        joint_regressor,
        skin_weights,
        shape_basis,
        faces,
        tree: KinematicTree::new(parents, tips)?,
    };
    assets.validate()?;
    Ok(assets)
}

fn points_to_values(points: &[Vector3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn values_to_points(section: &Section) -> Result<Vec<Vector3<f64>>> {
    if section.cols != 3 {
        return Err(Error::InvalidAsset(format!(
            "section {} must have 3 columns, has {}",
            section.name, section.cols
        )));
    }
    Ok((0..section.rows)
        .map(|r| Vector3::new(section.value(r, 0), section.value(r, 1), section.value(r, 2)))
        .collect())
}

fn section_rows(section: &Section) -> Vec<Vec<f64>> {
    (0..section.rows).map(|r| section.row(r).to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::synth_model;

    #[test]
    fn round_trip_is_lossless() {
        let assets = synth_model(7, 120).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        save_model(&assets, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, assets);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let assets = synth_model(7, 60).unwrap();
        let text = model_to_container(&assets).to_text();
        let cut = &text[..text.len() / 2];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_weight_row_is_invalid_asset() {
        let mut assets = synth_model(7, 60).unwrap();
        for w in &mut assets.skin_weights[4] {
            *w *= 0.5; // row sums to 0.5
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        model_to_container(&assets).save(&path).unwrap();
        assert!(matches!(load_model(&path), Err(Error::InvalidAsset(_))));
    }
}
