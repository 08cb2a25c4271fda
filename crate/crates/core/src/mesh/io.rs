//! Plain-text mesh format.
//!
//! ```text
//! <vertex count>
//! x y            (one line per vertex)
//! <triangle count>
//! a b c          (0-based vertex indices, counter-clockwise)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Refinement edges are
//! not stored; imported meshes get longest-edge labels.

use std::fmt::Write as _;

use super::Mesh;
use crate::error::{Error, Result};

/// Upper bound on counts accepted by the parser, to reject absurd headers
/// before allocating.
const MAX_ENTITIES: usize = 50_000_000;

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "{}", mesh.num_vertices()).unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{} {}", v[0], v[1]).unwrap();
    }
    writeln!(out, "{}", mesh.num_triangles()).unwrap();
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    out
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines.next().ok_or_else(|| Error::Parse {
            line: text.lines().count(),
            message: format!("unexpected end of input, expected {what}"),
        })
    };

    let (line, s) = next("vertex count")?;
    let nv = parse_count(s, line)?;
    let mut vertices = Vec::with_capacity(nv.min(1 << 20));
    for _ in 0..nv {
        let (line, s) = next("vertex coordinates")?;
        let vals = parse_fields::<f64>(s, 2, line)?;
        if !vals.iter().all(|x| x.is_finite()) {
            return Err(Error::Parse { line, message: "non-finite coordinate".into() });
        }
        vertices.push([vals[0], vals[1]]);
    }
    let (line, s) = next("triangle count")?;
    let nt = parse_count(s, line)?;
    let mut triangles = Vec::with_capacity(nt.min(1 << 20));
    for _ in 0..nt {
        let (line, s) = next("triangle indices")?;
        let idx = parse_fields::<usize>(s, 3, line)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= nv) {
            return Err(Error::Parse { line, message: format!("vertex index {bad} out of range") });
        }
        triangles.push([idx[0], idx[1], idx[2]]);
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse { line, message: "trailing data".into() });
    }
    Mesh::new(vertices, triangles)
}

fn parse_count(s: &str, line: usize) -> Result<usize> {
    let n: usize = s
        .parse()
        .map_err(|e| Error::Parse { line, message: format!("bad count {s:?}: {e}") })?;
    if n > MAX_ENTITIES {
        return Err(Error::Parse { line, message: format!("count {n} too large") });
    }
    Ok(n)
}

fn parse_fields<T: std::str::FromStr>(s: &str, n: usize, line: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let out: Vec<T> = s
        .split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|e| Error::Parse { line, message: format!("bad field {tok:?}: {e}") })
        })
        .collect::<Result<_>>()?;
    if out.len() != n {
        return Err(Error::Parse { line, message: format!("expected {n} fields, found {}", out.len()) });
    }
    Ok(out)
}
