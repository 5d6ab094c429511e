//! Manifest + CSV dataset format.
//!
//! A manifest is a JSON file
//!
//! ```json
//! {"geometry": {"normals_csv": "...", "areas_csv": "...", "ref_area": 1.0, "dim": 2},
//!  "datasets": [{"name": "...", "role": "training", "snapshots_csv": "...",
//!                "labels_csv": "...", "forces_csv": "..."}]}
//! ```
//!
//! with CSV paths relative to the manifest. Every CSV has one header row.
//! `normals_csv` has columns `nx,ny,nz`, `areas_csv` has `area`,
//! `snapshots_csv` is N rows × M columns, `labels_csv` has `t,f,alpha` and the
//! optional `forces_csv` has `fx,fy,fz`. Floats are written with 17
//! significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Role, SampleLabel, SnapshotSet, SurfaceGeometry};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryEntry {
    pub normals_csv: String,
    pub areas_csv: String,
    pub ref_area: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub role: Role,
    pub snapshots_csv: String,
    pub labels_csv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub geometry: GeometryEntry,
    pub datasets: Vec<DatasetEntry>,
}

/// Float formatting used by every CSV and artifact writer.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parse a table of numbers, checking the header width and finiteness.
fn read_table(
    path: &Path,
    expected_header: Option<&[&str]>,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if let Some(exp) = expected_header {
        if header != exp {
            return Err(Error::format(
                path,
                format!("expected header {exp:?}, found {header:?}"),
            ));
        }
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, format!("row {r}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Dimension {
                context: format!("{}: row {r} width", path.display()),
                expected: header.len(),
                found: rec.len(),
            });
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::format(
                    path,
                    format!("row {r}, column {c}: `{cell}` is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: path.display().to_string(),
                    row: r,
                    col: c,
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn vec3_rows(path: &Path, header: [&str; 3]) -> Result<Vec<Vector3<f64>>> {
    let (_, rows) = read_table(path, Some(&header))?;
    Ok(rows
        .iter()
        .map(|r| Vector3::new(r[0], r[1], r[2]))
        .collect())
}

fn expect_rows(path: &Path, what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::dimension(
            format!("{} ({what} rows)", path.display()),
            expected,
            found,
        ));
    }
    Ok(())
}

/// Read a manifest and every dataset it lists, in manifest order.
pub fn load_snapshots(manifest_path: &Path) -> Result<(SurfaceGeometry, Vec<SnapshotSet>)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(manifest_path, e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let g = &manifest.geometry;
    let normals_path = base.join(&g.normals_csv);
    let normals = vec3_rows(&normals_path, ["nx", "ny", "nz"])?;
    let areas_path = base.join(&g.areas_csv);
    let (_, area_rows) = read_table(&areas_path, Some(&["area"]))?;
    expect_rows(&areas_path, "area", normals.len(), area_rows.len())?;
    let areas = area_rows.into_iter().map(|r| r[0]).collect();
    let geometry =
        SurfaceGeometry::new(normals, areas, g.ref_area, g.dim).map_err(|e| match e {
            Error::Invalid(m) => Error::format(&normals_path, m),
            other => other,
        })?;
    let n = geometry.len();

    let mut sets = Vec::with_capacity(manifest.datasets.len());
    for d in &manifest.datasets {
        let snap_path = base.join(&d.snapshots_csv);
        let (header, rows) = read_table(&snap_path, None)?;
        expect_rows(&snap_path, "snapshot", n, rows.len())?;
        let m = header.len();
        let values = DMatrix::from_fn(n, m, |r, c| rows[r][c]);

        let labels_path = base.join(&d.labels_csv);
        let (_, lrows) = read_table(&labels_path, Some(&["t", "f", "alpha"]))?;
        expect_rows(&labels_path, "label", m, lrows.len())?;
        let labels = lrows
            .iter()
            .map(|r| SampleLabel {
                t: r[0],
                f: r[1],
                alpha: r[2],
            })
            .collect();

        let forces = match &d.forces_csv {
            Some(f) => {
                let p = base.join(f);
                let v = vec3_rows(&p, ["fx", "fy", "fz"])?;
                expect_rows(&p, "force", m, v.len())?;
                Some(v)
            }
            None => None,
        };
        sets.push(SnapshotSet::new(
            d.name.clone(),
            d.role,
            values,
            labels,
            forces,
        )?);
    }
    Ok((geometry, sets))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_text<I>(header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn strings(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

/// Write geometry, datasets and `manifest.json` into `dir`, returning the manifest path.
pub fn write_manifest(
    dir: &Path,
    geom: &SurfaceGeometry,
    sets: &[&SnapshotSet],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let normals_csv = "geometry_normals.csv".to_string();
    let areas_csv = "geometry_areas.csv".to_string();
    write_text(
        &dir.join(&normals_csv),
        &csv_text(
            &strings(&["nx", "ny", "nz"]),
            geom.normals().iter().map(|n| vec![n.x, n.y, n.z]),
        ),
    )?;
    write_text(
        &dir.join(&areas_csv),
        &csv_text(&strings(&["area"]), geom.areas().iter().map(|&a| vec![a])),
    )?;

    let mut datasets = Vec::with_capacity(sets.len());
    for s in sets {
        s.check_geometry(geom)?;
        let name = s.name();
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Invalid(format!(
                "dataset name `{name}` is not a safe file stem"
            )));
        }
        let snapshots_csv = format!("{name}_snapshots.csv");
        let labels_csv = format!("{name}_labels.csv");
        let header: Vec<String> = (0..s.len()).map(|j| format!("s{j}")).collect();
        let v = s.values();
        write_text(
            &dir.join(&snapshots_csv),
            &csv_text(
                &header,
                (0..v.nrows()).map(|r| v.row(r).iter().copied().collect()),
            ),
        )?;
        write_text(
            &dir.join(&labels_csv),
            &csv_text(
                &strings(&["t", "f", "alpha"]),
                s.labels().iter().map(|l| vec![l.t, l.f, l.alpha]),
            ),
        )?;
        let forces_csv = match s.forces() {
            Some(f) => {
                let file = format!("{name}_forces.csv");
                write_text(
                    &dir.join(&file),
                    &csv_text(
                        &strings(&["fx", "fy", "fz"]),
                        f.iter().map(|v| vec![v.x, v.y, v.z]),
                    ),
                )?;
                Some(file)
            }
            None => None,
        };
        datasets.push(DatasetEntry {
            name: name.to_string(),
            role: s.role(),
            snapshots_csv,
            labels_csv,
            forces_csv,
        });
    }
    let manifest = Manifest {
        geometry: GeometryEntry {
            normals_csv,
            areas_csv,
            ref_area: geom.ref_area(),
            dim: geom.dim(),
        },
        datasets,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_text(&path, &(json + "\n"))?;
    Ok(path)
}

/// Look a dataset up by name.
pub fn find<'a>(sets: &'a [SnapshotSet], name: &str) -> Result<&'a SnapshotSet> {
    sets.iter().find(|s| s.name() == name).ok_or_else(|| {
        let names: Vec<&str> = sets.iter().map(|s| s.name()).collect();
        Error::Invalid(format!("no dataset named `{name}` (available: {names:?})"))
    })
}
