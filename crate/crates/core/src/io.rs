//! Field export: legacy ASCII VTK point clouds and CSV.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::scalar::Real;

/// A named field attached to the points of one grid.
pub enum FieldRef<'a, T> {
    Scalar(&'a str, &'a ScalarField<T>),
    Vector(&'a str, &'a VectorField<T>),
}

impl<T: Real> FieldRef<'_, T> {
    fn grid(&self) -> &Grid {
        match self {
            FieldRef::Scalar(_, f) => f.grid(),
            FieldRef::Vector(_, f) => f.grid(),
        }
    }

    fn name(&self) -> &str {
        match self {
            FieldRef::Scalar(n, _) | FieldRef::Vector(n, _) => n,
        }
    }
}

fn check_fields<T: Real>(grid: &Grid, fields: &[FieldRef<'_, T>]) -> Result<()> {
    for f in fields {
        let g = f.grid();
        if g.h() != grid.h() || g.points() != grid.points() {
            return Err(Error::GridMismatch);
        }
        if f.name().is_empty() || f.name().chars().any(char::is_whitespace) {
            return Err(Error::InvalidParameter {
                name: "field name",
                reason: format!("{:?} must be non-empty without whitespace", f.name()),
            });
        }
    }
    Ok(())
}

/// Legacy VTK `POLYDATA` with one vertex per grid point and a `class` scalar
/// (0 boundary, 1 interior, 2..=9 core sublattice).
pub fn write_vtk<T: Real, W: Write>(mut out: W, grid: &Grid, title: &str, fields: &[FieldRef<'_, T>]) -> Result<()> {
    check_fields(grid, fields)?;
    let n = grid.len();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let mut body = || -> io::Result<()> {
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "{title}")?;
        writeln!(out, "ASCII")?;
        writeln!(out, "DATASET POLYDATA")?;
        writeln!(out, "POINTS {n} double")?;
        for k in 0..n {
            let x = grid.position(k);
            writeln!(out, "{} {} {}", x[0], x[1], x[2])?;
        }
        writeln!(out, "VERTICES {n} {}", 2 * n)?;
        for k in 0..n {
            writeln!(out, "1 {k}")?;
        }
        writeln!(out, "POINT_DATA {n}")?;
        writeln!(out, "SCALARS class int 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for k in 0..n {
            let c = match grid.core_class(k) {
                Some(j) => j + 2,
                None if grid.is_boundary(k) => 0,
                None => 1,
            };
            writeln!(out, "{c}")?;
        }
        for f in fields {
            match f {
                FieldRef::Scalar(name, s) => {
                    writeln!(out, "SCALARS {name} double 1")?;
                    writeln!(out, "LOOKUP_TABLE default")?;
                    for v in s.values() {
                        writeln!(out, "{}", v.as_f64())?;
                    }
                }
                FieldRef::Vector(name, v) => {
                    writeln!(out, "VECTORS {name} double")?;
                    for a in v.values() {
                        writeln!(out, "{} {} {}", a[0].as_f64(), a[1].as_f64(), a[2].as_f64())?;
                    }
                }
            }
        }
        out.flush()
    };
    body().map_err(|e| Error::InvalidParameter {
        name: "output",
        reason: e.to_string(),
    })
}

/// CSV with columns `x1,x2,x3,class` followed by one column per scalar and
/// three (`name_1..name_3`) per vector field.
pub fn write_fields_csv<T: Real, W: Write>(out: W, grid: &Grid, fields: &[FieldRef<'_, T>]) -> Result<()> {
    check_fields(grid, fields)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["x1", "x2", "x3", "class"].map(String::from).to_vec();
    for f in fields {
        match f {
            FieldRef::Scalar(name, _) => header.push(name.to_string()),
            FieldRef::Vector(name, _) => header.extend((1..=3).map(|i| format!("{name}_{i}"))),
        }
    }
    let to_err = |e: csv::Error| Error::InvalidParameter {
        name: "output",
        reason: e.to_string(),
    };
    w.write_record(&header).map_err(to_err)?;
    for k in 0..grid.len() {
        let x = grid.position(k);
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.push(grid.class_label(k));
        for f in fields {
            match f {
                FieldRef::Scalar(_, s) => row.push(s.at(k).as_f64().to_string()),
                FieldRef::Vector(_, v) => row.extend(v.at(k).iter().map(|c| c.as_f64().to_string())),
            }
        }
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::InvalidParameter {
        name: "output",
        reason: e.to_string(),
    })
}
