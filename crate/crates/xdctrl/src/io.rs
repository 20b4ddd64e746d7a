//! Matrix file formats.
//!
//! Two formats are supported:
//!
//! * CSV — dense, row-major; the first line is the header `rows,cols` with
//!   the two dimensions. Values round-trip exactly (shortest-representation
//!   float formatting).
//! * Binary (`.bcm`) — magic `BCM1`, little-endian `u32` fields `n, p, m`,
//!   then `n·p·m` little-endian `f64` entries in block order (block 0
//!   row-major, then block 1, ..). With `n = 1` the format doubles as a
//!   plain dense container; complex matrices are stored as a real/imaginary
//!   file pair.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::block_circulant::BlockCirculantMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BCM1";

/// Writes a dense matrix as CSV with a `rows,cols` header line.
pub fn write_dense_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{},{}", matrix.nrows(), matrix.ncols())?;
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|j| format!("{}", matrix[(i, j)]))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a dense CSV matrix written by [`write_dense_csv`].
pub fn read_dense_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::CorruptFile("empty file".into()))??;
    let dims: Vec<&str> = header.trim().split(',').collect();
    if dims.len() != 2 {
        return Err(Error::CorruptFile(format!(
            "header must be `rows,cols`, got {header:?}"
        )));
    }
    let rows: usize = dims[0]
        .trim()
        .parse()
        .map_err(|_| Error::CorruptFile(format!("bad row count {:?}", dims[0])))?;
    let cols: usize = dims[1]
        .trim()
        .parse()
        .map_err(|_| Error::CorruptFile(format!("bad column count {:?}", dims[1])))?;
    let mut matrix = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| {
            Error::CorruptFile(format!("expected {rows} data rows, file ends at {i}"))
        })??;
        let mut count = 0;
        for (j, field) in line.trim().split(',').enumerate() {
            if j >= cols {
                return Err(Error::CorruptFile(format!("row {i} has extra columns")));
            }
            matrix[(i, j)] = field.trim().parse().map_err(|_| {
                Error::CorruptFile(format!("row {i} column {j}: bad float {field:?}"))
            })?;
            count += 1;
        }
        if count != cols {
            return Err(Error::CorruptFile(format!(
                "row {i} has {count} columns, expected {cols}"
            )));
        }
    }
    Ok(matrix)
}

/// Loads a block-circulant matrix from a dense CSV file, validating the
/// circulant structure within `tol` (relative). Returns the matrix and the
/// worst observed deviation.
pub fn read_block_circulant_csv(
    path: &Path,
    n: usize,
    tol: f64,
) -> Result<(BlockCirculantMatrix, f64)> {
    let dense = read_dense_csv(path)?;
    BlockCirculantMatrix::from_dense(&dense, n, tol)
}

/// Writes a block-circulant matrix in the binary format.
pub fn write_bcm(path: &Path, matrix: &BlockCirculantMatrix) -> Result<()> {
    write_blocks(
        path,
        matrix.n(),
        matrix.block_rows(),
        matrix.block_cols(),
        matrix.blocks(),
    )
}

/// Writes `n` equally shaped blocks in the binary container format.
pub fn write_blocks(
    path: &Path,
    n: usize,
    p: usize,
    m: usize,
    blocks: &[DMatrix<f64>],
) -> Result<()> {
    if blocks.len() != n {
        return Err(Error::Shape(format!(
            "expected {n} blocks, got {}",
            blocks.len()
        )));
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    for dim in [n, p, m] {
        let v =
            u32::try_from(dim).map_err(|_| Error::Shape(format!("dimension {dim} exceeds u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for b in blocks {
        if b.nrows() != p || b.ncols() != m {
            return Err(Error::Shape("inconsistent block shape".into()));
        }
        for i in 0..p {
            for j in 0..m {
                w.write_all(&b[(i, j)].to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads the binary container back into its blocks.
pub fn read_blocks(path: &Path) -> Result<(usize, usize, usize, Vec<DMatrix<f64>>)> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::CorruptFile("file shorter than the magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::CorruptFile(format!(
            "bad magic {:?}, expected BCM1",
            magic
        )));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)
            .map_err(|_| Error::CorruptFile("truncated header".into()))?;
        *d = u32::from_le_bytes(buf) as usize;
    }
    let [n, p, m] = dims;
    let mut blocks = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        let mut block = DMatrix::zeros(p, m);
        for i in 0..p {
            for j in 0..m {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::CorruptFile("truncated data section".into()))?;
                block[(i, j)] = f64::from_le_bytes(buf);
            }
        }
        blocks.push(block);
    }
    if r.read(&mut buf[..1])? != 0 {
        return Err(Error::CorruptFile(
            "trailing bytes after data section".into(),
        ));
    }
    Ok((n, p, m, blocks))
}

/// Reads a block-circulant matrix from the binary format.
pub fn read_bcm(path: &Path) -> Result<BlockCirculantMatrix> {
    let (n, p, m, blocks) = read_blocks(path)?;
    BlockCirculantMatrix::new(n, p, m, blocks)
}

/// Writes a dense real matrix as a single-block binary container.
pub fn write_dense_bin(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    write_blocks(
        path,
        1,
        matrix.nrows(),
        matrix.ncols(),
        std::slice::from_ref(matrix),
    )
}

/// Reads a single-block binary container as a dense matrix.
pub fn read_dense_bin(path: &Path) -> Result<DMatrix<f64>> {
    let (n, _, _, mut blocks) = read_blocks(path)?;
    if n != 1 {
        return Err(Error::CorruptFile(format!(
            "expected a single-block container, found n = {n}"
        )));
    }
    Ok(blocks.remove(0))
}

/// Writes a set of equally shaped complex blocks as a `.re.bcm`/`.im.bcm`
/// file pair; `stem` is the path without that suffix.
pub fn write_complex_blocks(stem: &Path, blocks: &[DMatrix<Complex64>]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::Shape("no blocks to write".into()));
    }
    let p = blocks[0].nrows();
    let m = blocks[0].ncols();
    let re: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.map(|z| z.re)).collect();
    let im: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.map(|z| z.im)).collect();
    write_blocks(&suffixed(stem, ".re.bcm"), blocks.len(), p, m, &re)?;
    write_blocks(&suffixed(stem, ".im.bcm"), blocks.len(), p, m, &im)
}

/// Reads a complex block set written by [`write_complex_blocks`].
pub fn read_complex_blocks(stem: &Path) -> Result<Vec<DMatrix<Complex64>>> {
    let (n_re, p, m, re) = read_blocks(&suffixed(stem, ".re.bcm"))?;
    let (n_im, p2, m2, im) = read_blocks(&suffixed(stem, ".im.bcm"))?;
    if n_re != n_im || p != p2 || m != m2 {
        return Err(Error::CorruptFile(
            "real/imaginary file pair have different shapes".into(),
        ));
    }
    Ok(re
        .into_iter()
        .zip(im)
        .map(|(r, i)| DMatrix::from_fn(p, m, |a, b| Complex64::new(r[(a, b)], i[(a, b)])))
        .collect())
}

fn suffixed(stem: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(suffix);
    std::path::PathBuf::from(s)
}
