//! Plain-text grid snapshots: a one-line header `nx ny dx dy t` followed by
//! `ny` rows of `nx` values (row `j` holds `y = j dy`). Nodes outside the
//! region are written as 0.

use std::io::{BufRead, Write};

use crate::spectral::GridSpec;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub t: f64,
    /// Row-major, `values[j * nx + i]`.
    pub values: Vec<f64>,
}

impl GridFile {
    pub fn from_interior(grid: &GridSpec, interior: &[f64], t: f64) -> Self {
        let mut values = vec![0.0; grid.nx * grid.ny];
        for (k, v) in interior.iter().enumerate() {
            let (i, j) = grid.interior_node(k);
            values[j * grid.nx + i] = *v;
        }
        Self { nx: grid.nx, ny: grid.ny, dx: grid.dx, dy: grid.dy(), t, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }
}

pub fn write_grid_file(mut w: impl Write, grid: &GridSpec, interior: &[f64], t: f64) -> Result<()> {
    let g = GridFile::from_interior(grid, interior, t);
    writeln!(w, "{} {} {} {} {}", g.nx, g.ny, g.dx, g.dy, g.t)?;
    for row in g.values.chunks(g.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_grid_file(r: impl BufRead) -> Result<GridFile> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty grid file".into()))??;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 5 {
        return Err(Error::Format(format!("grid header needs 5 fields, got {}", h.len())));
    }
    let bad = |what: &str| Error::Format(format!("bad grid header field {what}"));
    let nx: usize = h[0].parse().map_err(|_| bad("nx"))?;
    let ny: usize = h[1].parse().map_err(|_| bad("ny"))?;
    let dx: f64 = h[2].parse().map_err(|_| bad("dx"))?;
    let dy: f64 = h[3].parse().map_err(|_| bad("dy"))?;
    let t: f64 = h[4].parse().map_err(|_| bad("t"))?;
    let mut values = Vec::with_capacity(nx * ny);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad grid value {s:?}"))))
            .collect::<Result<_>>()?;
        if row.len() != nx {
            return Err(Error::Format(format!("grid row has {} values, expected {nx}", row.len())));
        }
        values.extend(row);
    }
    if values.len() != nx * ny {
        return Err(Error::Format(format!("grid has {} rows, expected {ny}", values.len() / nx.max(1))));
    }
    Ok(GridFile { nx, ny, dx, dy, t, values })
}

/// `x,y,value` for interior nodes only.
pub fn write_grid_csv(mut w: impl Write, grid: &GridSpec, interior: &[f64]) -> Result<()> {
    writeln!(w, "x,y,value")?;
    for (k, v) in interior.iter().enumerate() {
        let p = grid.interior_point(k);
        writeln!(w, "{},{},{}", p.x, p.y, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn round_trip_is_exact() {
        let grid = GridSpec::with_cells(Domain::default().into(), 10);
        let vals: Vec<f64> = (0..grid.n_interior()).map(|k| (k as f64 * 0.37).sin() / 3.0).collect();
        let mut buf = Vec::new();
        write_grid_file(&mut buf, &grid, &vals, 0.0117).unwrap();
        let back = read_grid_file(&buf[..]).unwrap();
        assert_eq!(back, GridFile::from_interior(&grid, &vals, 0.0117));
        let (i, j) = grid.interior_node(5);
        assert_eq!(back.at(i, j), vals[5]);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(read_grid_file(&b""[..]).is_err());
        assert!(read_grid_file(&b"2 2 0.1 0.1\n"[..]).is_err());
        assert!(read_grid_file(&b"2 2 0.1 0.1 0\n1 2\n3\n"[..]).is_err());
        assert!(read_grid_file(&b"2 2 0.1 0.1 0\n1 2\n"[..]).is_err());
        assert!(read_grid_file(&b"2 1 0.1 0.1 0\n1 2\n"[..]).is_ok());
    }
}
