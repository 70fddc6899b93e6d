//! Splat checkpoints in the 3DGS PLY vertex layout, extended with bound_face
//! and splat_class columns. All raw parameters are stored as float32, so a
//! load-save-load cycle is bitwise identical and plain 3DGS exports import
//! cleanly (missing extension columns default to unbound Loose splats).

use crate::error::{Error, Result};
use crate::math::sh::basis_count;
use crate::math::{Quat, Vec3};
use crate::ply::{write_ply, Element, Format, Ply, Property, ScalarType};
use crate::splat::{SplatClass, SplatSet};
use std::path::Path;

fn rest_count(sh_degree: usize) -> usize {
    3 * (basis_count(sh_degree) - 1)
}

/// Degree from the number of f_rest_* columns; 3DGS writes 3((L+1)^2 - 1).
fn degree_from_rest(rest: usize) -> Result<usize> {
    for degree in 0..=3 {
        if rest == rest_count(degree) {
            return Ok(degree);
        }
    }
    Err(Error::Invalid(format!(
        "unsupported SH layout: {rest} f_rest properties (expected 0, 9, 24, or 45)"
    )))
}

pub fn save_checkpoint(path: &Path, set: &SplatSet) -> Result<()> {
    let n = set.len();
    let nb = basis_count(set.sh_degree);
    let mut props: Vec<Property> = Vec::new();
    let float = |name: &str, values: Vec<f64>| Property::scalar(name, ScalarType::Float, values);

    for (name, axis) in [("x", 0), ("y", 1), ("z", 2)] {
        props.push(float(name, set.positions.iter().map(|p| p.get(axis)).collect()));
    }
    for ch in 0..3 {
        props.push(float(
            &format!("f_dc_{ch}"),
            (0..n).map(|i| set.sh_coeffs(i)[ch * nb]).collect(),
        ));
    }
    for k in 0..rest_count(set.sh_degree) {
        let (ch, b) = (k / (nb - 1), k % (nb - 1) + 1);
        props.push(float(
            &format!("f_rest_{k}"),
            (0..n).map(|i| set.sh_coeffs(i)[ch * nb + b]).collect(),
        ));
    }
    props.push(float("opacity", set.raw_opacities.clone()));
    for axis in 0..3 {
        props.push(float(
            &format!("scale_{axis}"),
            set.raw_scales.iter().map(|s| s.get(axis)).collect(),
        ));
    }
    let rot_comp = |k: usize, q: &Quat| [q.w, q.x, q.y, q.z][k];
    for k in 0..4 {
        props.push(float(
            &format!("rot_{k}"),
            set.rotations.iter().map(|q| rot_comp(k, q)).collect(),
        ));
    }
    props.push(Property::scalar(
        "bound_face",
        ScalarType::Int,
        set.bound_faces.iter().map(|f| f.map_or(-1.0, |v| v as f64)).collect(),
    ));
    props.push(Property::scalar(
        "splat_class",
        ScalarType::UChar,
        set.classes
            .iter()
            .map(|c| if *c == SplatClass::Tight { 1.0 } else { 0.0 })
            .collect(),
    ));

    let ply = Ply {
        format: Format::BinaryLittleEndian,
        elements: vec![Element { name: "vertex".into(), count: n, properties: props }],
    };
    write_ply(path, &ply)
}

pub fn load_checkpoint(path: &Path) -> Result<SplatSet> {
    let ply = crate::ply::read_ply(path)?;
    let vertex = ply
        .element("vertex")
        .ok_or_else(|| Error::format(path, "no vertex element"))?;
    let col = |name: &str| -> Result<&[f64]> {
        vertex
            .scalar_column(name)
            .ok_or_else(|| Error::format(path, format!("missing property {name}")))
    };

    let mut rest = 0;
    while vertex.property(&format!("f_rest_{rest}")).is_some() {
        rest += 1;
    }
    let sh_degree = degree_from_rest(rest).map_err(|e| Error::format(path, e.to_string()))?;
    let nb = basis_count(sh_degree);

    let n = vertex.count;
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let dc: Vec<&[f64]> = (0..3)
        .map(|ch| col(&format!("f_dc_{ch}")))
        .collect::<Result<_>>()?;
    let rest_cols: Vec<&[f64]> = (0..rest)
        .map(|k| col(&format!("f_rest_{k}")))
        .collect::<Result<_>>()?;
    let opacity = col("opacity")?;
    let scales: Vec<&[f64]> = (0..3)
        .map(|a| col(&format!("scale_{a}")))
        .collect::<Result<_>>()?;
    let rots: Vec<&[f64]> = (0..4)
        .map(|k| col(&format!("rot_{k}")))
        .collect::<Result<_>>()?;
    let bound_face = vertex.scalar_column("bound_face");
    let splat_class = vertex.scalar_column("splat_class");

    let mut set = SplatSet::new(sh_degree);
    let mut sh = vec![0.0; 3 * nb];
    for i in 0..n {
        for ch in 0..3 {
            sh[ch * nb] = dc[ch][i];
        }
        for (k, c) in rest_cols.iter().enumerate() {
            let (ch, b) = (k / (nb - 1), k % (nb - 1) + 1);
            sh[ch * nb + b] = c[i];
        }
        let face = match bound_face.map(|c| c[i]) {
            Some(v) if v >= 0.0 => Some(v as u32),
            _ => None,
        };
        let class = match splat_class.map(|c| c[i]) {
            Some(v) if v != 0.0 => SplatClass::Tight,
            _ => SplatClass::Loose,
        };
        set.push(
            Vec3::new(x[i], y[i], z[i]),
            Vec3::new(scales[0][i], scales[1][i], scales[2][i]),
            opacity[i],
            Quat::new(rots[0][i], rots[1][i], rots[2][i], rots[3][i]),
            &sh,
            face,
            class,
        );
    }
    Ok(set)
}
