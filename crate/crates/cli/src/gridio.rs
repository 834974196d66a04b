//! Flat binary layout for grid data: a header of `n`, `N`, `h` as
//! little-endian 64-bit values, then interleaved re/im 64-bit floats in
//! row-major order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use qmlab_core::quantization::GridFunction;

use crate::CliError;

pub fn write_grid(path: &Path, u: &GridFunction, h: f64) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io)?;
    let mut w = BufWriter::new(file);
    let grid = u.grid();
    w.write_all(&(grid.dim() as u64).to_le_bytes())
        .map_err(CliError::io)?;
    w.write_all(&(grid.points_per_axis() as u64).to_le_bytes())
        .map_err(CliError::io)?;
    w.write_all(&h.to_le_bytes()).map_err(CliError::io)?;
    for v in u.values() {
        w.write_all(&v.re.to_le_bytes()).map_err(CliError::io)?;
        w.write_all(&v.im.to_le_bytes()).map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)
}
