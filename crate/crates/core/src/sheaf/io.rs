//! Directory layout: `bases.csv`, `edges.csv`, `meta.json`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{assemble_laplacian, OrthogonalSheaf, SheafMeta, Transports, WeightGraph};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, parse_usize};

/// Writes the sheaf so that [`load_sheaf`] rebuilds the identical Laplacian.
pub fn save_sheaf(sheaf: &OrthogonalSheaf, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let d = sheaf.d_hat();

    let mut w = csv::Writer::from_path(dir.join("bases.csv"))?;
    w.write_record((1..=d).map(|c| format!("b{c}")))?;
    if let Some(bases) = sheaf.bases() {
        for o in bases {
            for row in o.row_iter() {
                w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
    let mut header = vec!["i".to_string(), "j".to_string(), "w_ij".to_string()];
    for a in 1..=d {
        for b in 1..=d {
            header.push(format!("t{a}{b}"));
        }
    }
    w.write_record(&header)?;
    let graph = sheaf.graph();
    for ((i, j, wij), o) in graph.edges().zip(sheaf.transports().upper(graph)) {
        let mut rec = vec![i.to_string(), j.to_string(), fmt_f64(wij)];
        for a in 0..d {
            for b in 0..d {
                rec.push(fmt_f64(o[(a, b)]));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(sheaf.meta())?)?;
    Ok(())
}

pub fn load_sheaf(dir: impl AsRef<Path>) -> Result<OrthogonalSheaf> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: SheafMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let (n, p, d) = (meta.n, meta.p, meta.d_hat);

    let bases_path = dir.join("bases.csv");
    let mut r = csv::Reader::from_path(&bases_path)?;
    let mut flat = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != d {
            return Err(bad(&bases_path, format!("expected {d} columns, found {}", rec.len())));
        }
        for s in rec.iter() {
            flat.push(parse_f64(s, &bases_path)?);
        }
    }
    let bases = if flat.is_empty() {
        None
    } else {
        if flat.len() != n * p * d {
            return Err(bad(&bases_path, format!("expected {} rows, found {}", n * p, flat.len() / d)));
        }
        Some(
            (0..n)
                .map(|i| DMatrix::from_row_slice(p, d, &flat[i * p * d..(i + 1) * p * d]))
                .collect(),
        )
    };

    let edges_path = dir.join("edges.csv");
    let mut r = csv::Reader::from_path(&edges_path)?;
    let mut edges = Vec::new();
    let mut maps = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 + d * d {
            return Err(bad(&edges_path, format!("expected {} columns, found {}", 3 + d * d, rec.len())));
        }
        let i = parse_usize(&rec[0], &edges_path)?;
        let j = parse_usize(&rec[1], &edges_path)?;
        if i >= j {
            return Err(bad(&edges_path, format!("edge ({i}, {j}) must satisfy i < j")));
        }
        let w = parse_f64(&rec[2], &edges_path)?;
        let vals = (3..3 + d * d)
            .map(|c| parse_f64(&rec[c], &edges_path))
            .collect::<Result<Vec<_>>>()?;
        edges.push((i, j, w));
        maps.push(((i, j), DMatrix::from_row_slice(d, d, &vals)));
    }
    let graph = WeightGraph::from_edges(n, &edges)?;
    // WeightGraph::edges() yields row order; match the file rows to it
    maps.sort_by_key(|(ij, _)| *ij);
    let upper: Vec<DMatrix<f64>> = maps.into_iter().map(|(_, o)| o).collect();
    let transports = Transports::from_upper(&graph, d, &upper)?;
    let mut sheaf = assemble_laplacian(graph, bases, transports, meta.epsilon)?;
    sheaf.meta = meta;
    Ok(sheaf)
}

fn bad(path: &Path, reason: String) -> Error {
    Error::Parse {
        path: path.into(),
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_sphere;
    use crate::sheaf::{build_sheaf, SheafParams};

    #[test]
    fn reload_reproduces_laplacian_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample_sphere(120, 21).unwrap();
        let s = build_sheaf(&c, &SheafParams::default()).unwrap();
        save_sheaf(&s, dir.path()).unwrap();
        let back = load_sheaf(dir.path()).unwrap();
        assert_eq!(back.meta(), s.meta());
        assert_eq!(back.laplacian_dense().unwrap(), s.laplacian_dense().unwrap());
        assert_eq!(back.bases().unwrap(), s.bases().unwrap());
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
        for key in ["n", "p", "d_hat", "epsilon", "seed", "gamma"] {
            assert!(meta.get(key).is_some(), "meta.json lacks {key}");
        }
    }

    #[test]
    fn edges_header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample_sphere(80, 2).unwrap();
        let s = build_sheaf(&c, &SheafParams::default()).unwrap();
        save_sheaf(&s, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("edges.csv")).unwrap();
        assert!(text.starts_with("i,j,w_ij,t11,t12,t21,t22\n"));
        let rows = text.lines().count() - 1;
        assert_eq!(rows, s.graph().edge_count());
        let bases = fs::read_to_string(dir.path().join("bases.csv")).unwrap();
        assert_eq!(bases.lines().count() - 1, 80 * 3);
    }
}
