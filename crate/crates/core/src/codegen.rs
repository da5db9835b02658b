//! Seeded code generation and the codebook file format.
//!
//! Position `i` (1-based) draws its bias from the stream `(seed, Bias, i, 0)`
//! and user `j` (0-based) gets symbol 1 iff `open01(key(seed, Bits, i, j))`
//! falls below that bias. Any symbol can therefore be regenerated without
//! touching its neighbours, and adding users never changes existing rows.
//!
//! File layout, all integers little-endian:
//!
//! | offset | size            | field                                 |
//! |--------|-----------------|---------------------------------------|
//! | 0      | 8               | magic `TARDOSCB`                      |
//! | 8      | 4               | version (1)                           |
//! | 12     | 4               | reserved, zero                        |
//! | 16     | 8               | n (users)                             |
//! | 24     | 8               | ell (positions)                       |
//! | 32     | 8               | seed                                  |
//! | 40     | 8               | delta, IEEE-754 double                |
//! | 48     | 8 * ell         | biases, IEEE-754 doubles              |
//! | ...    | n * ceil(ell/8) | rows, bit `i-1` of a row at byte `(i-1)/8`, LSB first |
//! | ...    | 8               | first 8 bytes of SHA-256 over all preceding bytes |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dist::BiasDistribution;
use crate::error::{CodebookError, Result};
use crate::rng::{self, StreamRng, Tag};

pub const MAGIC: &[u8; 8] = b"TARDOSCB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;

/// Read access to a binary code: biases and symbols by position.
///
/// Positions are 1-based, users 0-based.
pub trait Code: Sync {
    fn n_users(&self) -> u64;

    /// Number of positions, or `None` for an unbounded stream.
    fn len(&self) -> Option<u64>;

    fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    fn bias(&self, i: u64) -> f64;

    fn bit(&self, user: u64, i: u64) -> bool;

    /// Symbols of `users` at position `i`, written into `out`.
    fn column_into(&self, i: u64, users: &[u64], out: &mut Vec<bool>) {
        out.clear();
        out.extend(users.iter().map(|&u| self.bit(u, i)));
    }

    fn cutoff(&self) -> f64;
}

/// On-demand generator; never materializes the matrix.
#[derive(Debug, Clone, Copy)]
pub struct CodeStream {
    seed: u64,
    n: u64,
    len: Option<u64>,
    dist: BiasDistribution,
}

impl CodeStream {
    pub fn new(seed: u64, n: u64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(CodebookError::Dimension("code needs at least one user".to_string()).into());
        }
        Ok(CodeStream {
            seed,
            n,
            len: None,
            dist: BiasDistribution::new(delta)?,
        })
    }

    pub fn with_len(mut self, ell: u64) -> Self {
        self.len = Some(ell);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[inline]
fn bias_at(seed: u64, dist: &BiasDistribution, i: u64) -> f64 {
    dist.sample_unchecked(StreamRng::new(seed, Tag::Bias, i, 0).next_open01())
}

#[inline]
fn symbol(position_key: u64, p: f64, user: u64) -> bool {
    rng::open01(rng::extend(position_key, user)) < p
}

impl Code for CodeStream {
    fn n_users(&self) -> u64 {
        self.n
    }

    fn len(&self) -> Option<u64> {
        self.len
    }

    fn bias(&self, i: u64) -> f64 {
        bias_at(self.seed, &self.dist, i)
    }

    fn bit(&self, user: u64, i: u64) -> bool {
        symbol(rng::key2(self.seed, Tag::Bits, i), self.bias(i), user)
    }

    fn column_into(&self, i: u64, users: &[u64], out: &mut Vec<bool>) {
        let p = self.bias(i);
        let k = rng::key2(self.seed, Tag::Bits, i);
        out.clear();
        out.extend(users.iter().map(|&u| symbol(k, p, u)));
    }

    fn cutoff(&self) -> f64 {
        self.dist.delta()
    }
}

/// Bias and full column of `n` symbols for position `i >= 1`.
pub fn generate_position(seed: u64, i: u64, delta: f64, n: u64) -> Result<(f64, Vec<bool>)> {
    let dist = BiasDistribution::new(delta)?;
    let p = bias_at(seed, &dist, i);
    let k = rng::key2(seed, Tag::Bits, i);
    Ok((p, (0..n).map(|u| symbol(k, p, u)).collect()))
}

/// Row-major bit matrix, each row padded to whole bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    row_bytes: usize,
    data: Vec<u8>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let row_bytes = cols.div_ceil(8);
        BitMatrix {
            rows,
            cols,
            row_bytes,
            data: vec![0; rows * row_bytes],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.row_bytes + c / 8] >> (c % 8) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let byte = &mut self.data[r * self.row_bytes + c / 8];
        if v {
            *byte |= 1 << (c % 8);
        } else {
            *byte &= !(1 << (c % 8));
        }
    }

    pub fn row_bytes(&self, r: usize) -> &[u8] {
        &self.data[r * self.row_bytes..(r + 1) * self.row_bytes]
    }
}

/// A materialized code of fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook {
    pub seed: u64,
    pub delta_used: f64,
    pub bias: Vec<f64>,
    pub matrix: BitMatrix,
}

impl CodeBook {
    /// Materializes `ell` positions of the seeded stream for `n` users.
    pub fn generate(seed: u64, n: u64, ell: u64, delta: f64) -> Result<Self> {
        let stream = CodeStream::new(seed, n, delta)?;
        if ell == 0 {
            return Err(CodebookError::Dimension("codebook needs at least one position".to_string()).into());
        }
        let mut matrix = BitMatrix::zeros(n as usize, ell as usize);
        let mut bias = Vec::with_capacity(ell as usize);
        for i in 1..=ell {
            let p = stream.bias(i);
            let k = rng::key2(seed, Tag::Bits, i);
            for u in 0..n {
                if symbol(k, p, u) {
                    matrix.set(u as usize, (i - 1) as usize, true);
                }
            }
            bias.push(p);
        }
        Ok(CodeBook {
            seed,
            delta_used: delta,
            bias,
            matrix,
        })
    }

    /// Wraps explicit biases and symbols, e.g. hand-built test codes.
    pub fn from_parts(bias: Vec<f64>, rows: &[Vec<bool>], delta_used: f64) -> Self {
        let ell = bias.len();
        let mut matrix = BitMatrix::zeros(rows.len(), ell);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ell, "row {r} has the wrong length");
            for (c, &v) in row.iter().enumerate() {
                matrix.set(r, c, v);
            }
        }
        CodeBook {
            seed: 0,
            delta_used,
            bias,
            matrix,
        }
    }

    pub fn ell(&self) -> u64 {
        self.bias.len() as u64
    }

    pub fn row(&self, user: u64) -> Vec<bool> {
        (0..self.bias.len())
            .map(|c| self.matrix.get(user as usize, c))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut hasher = Sha256::new();
        let mut emit = |bytes: &[u8]| -> Result<()> {
            hasher.update(bytes);
            out.write_all(bytes)?;
            Ok(())
        };
        emit(MAGIC)?;
        emit(&VERSION.to_le_bytes())?;
        emit(&0u32.to_le_bytes())?;
        emit(&(self.matrix.rows() as u64).to_le_bytes())?;
        emit(&self.ell().to_le_bytes())?;
        emit(&self.seed.to_le_bytes())?;
        emit(&self.delta_used.to_le_bytes())?;
        for p in &self.bias {
            emit(&p.to_le_bytes())?;
        }
        for r in 0..self.matrix.rows() {
            emit(self.matrix.row_bytes(r))?;
        }
        let digest = hasher.finalize();
        out.write_all(&digest[..8])?;
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, CodebookError> {
        if bytes.len() < HEADER_LEN {
            return Err(CodebookError::CorruptHeader(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(CodebookError::CorruptHeader("bad magic".to_string()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(CodebookError::CorruptHeader(format!(
                "unsupported version {version}"
            )));
        }
        if u32_at(12) != 0 {
            return Err(CodebookError::CorruptHeader("reserved field is not zero".to_string()));
        }
        let n = u64_at(16);
        let ell = u64_at(24);
        let seed = u64_at(32);
        let delta = f64::from_bits(u64_at(40));
        if n == 0 || ell == 0 {
            return Err(CodebookError::Dimension(format!("n = {n}, ell = {ell}")));
        }
        if !(0.0..0.5).contains(&delta) {
            return Err(CodebookError::CorruptHeader(format!("delta = {delta}")));
        }
        let row_bytes = ell.div_ceil(8);
        let expected = ell
            .checked_mul(8)
            .and_then(|b| n.checked_mul(row_bytes).and_then(|m| m.checked_add(b)))
            .and_then(|body| body.checked_add(HEADER_LEN as u64 + 8))
            .ok_or_else(|| CodebookError::Dimension(format!("n = {n}, ell = {ell} overflow")))?;
        if bytes.len() as u64 != expected {
            return Err(CodebookError::Checksum(format!(
                "file holds {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let body_end = bytes.len() - 8;
        let digest = Sha256::digest(&bytes[..body_end]);
        if digest[..8] != bytes[body_end..] {
            return Err(CodebookError::Checksum("digest mismatch".to_string()));
        }
        let ell = ell as usize;
        let bias: Vec<f64> = (0..ell)
            .map(|k| f64::from_bits(u64_at(HEADER_LEN + 8 * k)))
            .collect();
        let start = HEADER_LEN + 8 * ell;
        let matrix = BitMatrix {
            rows: n as usize,
            cols: ell,
            row_bytes: row_bytes as usize,
            data: bytes[start..body_end].to_vec(),
        };
        Ok(CodeBook {
            seed,
            delta_used: delta,
            bias,
            matrix,
        })
    }
}

impl Code for CodeBook {
    fn n_users(&self) -> u64 {
        self.matrix.rows() as u64
    }

    fn len(&self) -> Option<u64> {
        Some(self.ell())
    }

    fn bias(&self, i: u64) -> f64 {
        self.bias[(i - 1) as usize]
    }

    fn bit(&self, user: u64, i: u64) -> bool {
        self.matrix.get(user as usize, (i - 1) as usize)
    }

    fn cutoff(&self) -> f64 {
        self.delta_used
    }
}
