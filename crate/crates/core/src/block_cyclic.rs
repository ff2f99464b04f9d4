//! Index arithmetic of the 2-D block-cyclic distribution.
//!
//! An `m x n` matrix is cut into `mb x nb` blocks; block `(i, j)` belongs to
//! process-grid coordinate `(i mod P, j mod Q)`, numbered row-major as
//! `p = (i mod P) * Q + (j mod Q)`. Within its owner the block sits at local
//! block position `(i div P, j div Q)`.

use std::fmt::Write;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub mb: usize,
    pub nb: usize,
    pub p: usize,
    pub q: usize,
}

impl GridSpec {
    pub fn new(mb: usize, nb: usize, p: usize, q: usize) -> Result<Self> {
        if mb == 0 || nb == 0 || p == 0 || q == 0 {
            return Err(Error::Config(format!(
                "block sizes and process grid must be positive, got mb={mb} nb={nb} P={p} Q={q}"
            )));
        }
        Ok(Self { mb, nb, p, q })
    }

    pub fn processes(&self) -> usize {
        self.p * self.q
    }
}

pub fn owner(spec: &GridSpec, block_row: usize, block_col: usize) -> usize {
    (block_row % spec.p) * spec.q + block_col % spec.q
}

pub fn local_index(spec: &GridSpec, block_row: usize, block_col: usize) -> (usize, usize) {
    (block_row / spec.p, block_col / spec.q)
}

/// Owner of element `(i, j)`.
pub fn element_owner(spec: &GridSpec, i: usize, j: usize) -> usize {
    owner(spec, i / spec.mb, j / spec.nb)
}

/// Per-dimension element counts owned by each process row (or column).
fn extents(len: usize, block: usize, procs: usize) -> Vec<usize> {
    let mut out = vec![0; procs];
    let mut start = 0;
    let mut b = 0;
    while start < len {
        out[b % procs] += block.min(len - start);
        start += block;
        b += 1;
    }
    out
}

/// Elements owned by each process, indexed by process id; sums to `m * n`.
pub fn distribution_report(spec: &GridSpec, m: usize, n: usize) -> Vec<usize> {
    let rows = extents(m, spec.mb, spec.p);
    let cols = extents(n, spec.nb, spec.q);
    let mut counts = vec![0; spec.processes()];
    for (pr, &r) in rows.iter().enumerate() {
        for (pc, &c) in cols.iter().enumerate() {
            counts[pr * spec.q + pc] = r * c;
        }
    }
    counts
}

/// ASCII map of block owners; `|` and `-` mark the edges of `P x Q` tiles.
pub fn ownership_map(spec: &GridSpec, m: usize, n: usize) -> String {
    let (br, bc) = (m.div_ceil(spec.mb), n.div_ceil(spec.nb));
    let width = format!("P{}", spec.processes().saturating_sub(1)).len();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{m} x {n} matrix, {} x {} blocks, {} x {} process grid",
        spec.mb, spec.nb, spec.p, spec.q
    );
    let rule: String = (0..bc)
        .map(|j| {
            let sep = if j > 0 && j % spec.q == 0 { "+" } else { "" };
            format!("{sep}{}", "-".repeat(width + 2))
        })
        .collect();
    for i in 0..br {
        if i > 0 && i % spec.p == 0 {
            let _ = writeln!(out, "{rule}");
        }
        for j in 0..bc {
            if j > 0 && j % spec.q == 0 {
                out.push('|');
            }
            let _ = write!(out, " {:>width$} ", format!("P{}", owner(spec, i, j)));
        }
        out.push('\n');
    }
    out
}
