//! randUTV as an algorithm-by-blocks.
//!
//! `analyze` restates the blocked factorization over `b x b` blocks and emits
//! a typed task stream; every task names the blocks it reads (`in`) and the
//! blocks it reads and writes (`inout`). The stream is turned into a DAG by
//! [`crate::scheduler`] and executed against a [`BlockStore`], where each
//! block lives behind its own lock.
//!
//! Per step `i` (block column `i` of `T`):
//!
//! * **V stage** (skipped on the last block column): Gaussian blocks `G(r)`,
//!   block products `Y(j) = sum_r T(r,j)^T G(r)`, `q` power rounds through
//!   `G(r) = sum_j T(r,j) Y(j)`, then an updating QR of `Y` — a dense QR of
//!   `Y(i)` followed by triangular-dense QRs against each `Y(j)` — applied
//!   from the right to every block row of `T` (and of `V`).
//! * **U stage** (skipped on the last block row): the same updating QR down
//!   block column `i` of `T`, applied from the left to the block row and from
//!   the right to `U`; the annihilated blocks are zeroed afterwards.
//! * **SVD stage**: the diagonal block is diagonalized and its block row and
//!   block column (and `U`, `V`) are rotated accordingly.
//!
//! Scratch blocks get stable per-step names: `S(i,j)`/`X(i,r)` hold WY
//! triangular factors of the V/U stage QRs, `E(i)`/`D(i)` keep copies of the
//! dense QR reflectors so the trailing td QRs may proceed while the
//! reflectors are still being applied, `P(i)`/`Q(i)` hold `U_svd` and
//! `V_svd^T`.
//!
//! Every diagonal block must be a full `b x b` square. Ragged edges are
//! therefore accepted only in the dimension with strictly more blocks.

use std::collections::HashMap;
use std::fmt;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::blocked::{with_qr_prepass, UtvConfig, UtvResult};
use crate::error::{Error, Result};
use crate::householder::{apply_q_right_td, apply_qt_left_td, dense_twy, hqr_in_place, td_qr_in_place, CompactWY};
use crate::matrix::{gemm, Matrix, Trans};
use crate::rng::RngState;
use crate::scheduler::{self, Dependent, TaskGraph, TraceEvent};
use crate::svd::svd_block;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    GenerateNormalRandom,
    /// `C = A^T B`
    GemmTnOz,
    /// `C = C + A^T B`
    GemmTnOo,
    /// `C = A B`, power iteration
    GemmNnOz,
    /// `C = C + A B`, power iteration
    GemmNnOo,
    CompDenseQr,
    CompTdQr,
    Copy,
    ApplyRightQOfDenseQr,
    ApplyRightQTdQr,
    ApplyLeftQtOfDenseQr,
    ApplyLeftQtOfTdQr,
    KeepUpperTriang,
    SetToZero,
    SvdOfBlock,
    /// `A = B^T A`
    GemmAbta,
    /// `A = A B^T`
    GemmAabt,
    /// `A = A B`, accumulation of `U`
    GemmAab,
}

impl TaskKind {
    pub const ALL: [TaskKind; 18] = [
        TaskKind::GenerateNormalRandom,
        TaskKind::GemmTnOz,
        TaskKind::GemmTnOo,
        TaskKind::GemmNnOz,
        TaskKind::GemmNnOo,
        TaskKind::CompDenseQr,
        TaskKind::CompTdQr,
        TaskKind::Copy,
        TaskKind::ApplyRightQOfDenseQr,
        TaskKind::ApplyRightQTdQr,
        TaskKind::ApplyLeftQtOfDenseQr,
        TaskKind::ApplyLeftQtOfTdQr,
        TaskKind::KeepUpperTriang,
        TaskKind::SetToZero,
        TaskKind::SvdOfBlock,
        TaskKind::GemmAbta,
        TaskKind::GemmAabt,
        TaskKind::GemmAab,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::GenerateNormalRandom => "Generate_normal_random",
            TaskKind::GemmTnOz => "Gemm_tn_oz",
            TaskKind::GemmTnOo => "Gemm_tn_oo",
            TaskKind::GemmNnOz => "Gemm_nn_oz",
            TaskKind::GemmNnOo => "Gemm_nn_oo",
            TaskKind::CompDenseQr => "Comp_dense_QR",
            TaskKind::CompTdQr => "Comp_td_QR",
            TaskKind::Copy => "Copy",
            TaskKind::ApplyRightQOfDenseQr => "Apply_right_Q_of_dense_QR",
            TaskKind::ApplyRightQTdQr => "Apply_right_Q_td_QR",
            TaskKind::ApplyLeftQtOfDenseQr => "Apply_left_Qt_of_dense_QR",
            TaskKind::ApplyLeftQtOfTdQr => "Apply_left_Qt_of_td_QR",
            TaskKind::KeepUpperTriang => "Keep_upper_triang",
            TaskKind::SetToZero => "Set_to_zero",
            TaskKind::SvdOfBlock => "Svd_of_block",
            TaskKind::GemmAbta => "Gemm_abta",
            TaskKind::GemmAabt => "Gemm_aabt",
            TaskKind::GemmAab => "Gemm_aab",
        }
    }

    pub fn from_name(s: &str) -> Option<TaskKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// `(in, inout)` operand counts.
    fn arity(self) -> (usize, usize) {
        use TaskKind::*;
        match self {
            GenerateNormalRandom | KeepUpperTriang | SetToZero => (0, 1),
            GemmTnOz | GemmTnOo | GemmNnOz | GemmNnOo => (2, 1),
            CompDenseQr => (0, 2),
            CompTdQr | SvdOfBlock => (0, 3),
            Copy | GemmAbta | GemmAabt | GemmAab => (1, 1),
            ApplyRightQOfDenseQr | ApplyLeftQtOfDenseQr => (2, 1),
            ApplyRightQTdQr | ApplyLeftQtOfTdQr => (2, 2),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which logical matrix a block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Array {
    T,
    G,
    Y,
    U,
    V,
    /// WY factors of the V-stage QR, indexed `(step, block)`.
    S,
    /// WY factors of the U-stage QR, indexed `(step, block)`.
    X,
    /// Copy of the V-stage dense QR, indexed by step.
    E,
    /// Copy of the U-stage dense QR, indexed by step.
    D,
    /// Left singular vectors of the diagonal block, indexed by step.
    P,
    /// Transposed right singular vectors, indexed by step.
    Q,
}

impl Array {
    fn single_index(self) -> bool {
        matches!(self, Array::G | Array::Y | Array::E | Array::D | Array::P | Array::Q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub array: Array,
    pub row: usize,
    pub col: usize,
}

impl BlockId {
    pub fn new(array: Array, row: usize, col: usize) -> Self {
        Self { array, row, col }
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.array.single_index() {
            write!(f, "{:?}({})", self.array, self.row)
        } else {
            write!(f, "{:?}({},{})", self.array, self.row, self.col)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub kind: TaskKind,
    pub ins: Vec<BlockId>,
    pub inouts: Vec<BlockId>,
    pub step: usize,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[BlockId]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        write!(
            f,
            "{} in=[{}] inout=[{}] step={}",
            self.kind,
            list(&self.ins),
            list(&self.inouts),
            self.step
        )
    }
}

impl Dependent for Task {
    type Id = BlockId;
    fn reads(&self) -> &[BlockId] {
        &self.ins
    }
    fn writes(&self) -> &[BlockId] {
        &self.inouts
    }
    fn label(&self) -> String {
        self.kind.name().to_string()
    }
}

/// One task per line, as produced by `Task`'s `Display`.
pub fn transcript(tasks: &[Task]) -> String {
    let mut s = String::new();
    for t in tasks {
        s.push_str(&t.to_string());
        s.push('\n');
    }
    s
}

/// Block layout of an `m x n` problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub n: usize,
    pub b: usize,
}

impl Layout {
    pub fn new(m: usize, n: usize, b: usize) -> Result<Self> {
        if b < 1 {
            return Err(Error::Config("block size b must be at least 1".into()));
        }
        if m == 0 || n == 0 {
            return Err(Error::Config(format!("cannot factor an empty {m}x{n} matrix")));
        }
        let l = Self { m, n, b };
        let (mb, nb) = (l.block_rows(), l.block_cols());
        if !m.is_multiple_of(b) && mb <= nb {
            return Err(Error::Config(format!(
                "b={b} does not divide m={m}; a ragged last block row needs more block rows than block columns"
            )));
        }
        if !n.is_multiple_of(b) && nb <= mb {
            return Err(Error::Config(format!(
                "b={b} does not divide n={n}; a ragged last block column needs more block columns than block rows"
            )));
        }
        Ok(l)
    }

    pub fn block_rows(&self) -> usize {
        self.m.div_ceil(self.b)
    }

    pub fn block_cols(&self) -> usize {
        self.n.div_ceil(self.b)
    }

    fn extent(total: usize, b: usize, i: usize) -> usize {
        b.min(total - i * b)
    }

    pub fn row_extent(&self, r: usize) -> usize {
        Self::extent(self.m, self.b, r)
    }

    pub fn col_extent(&self, c: usize) -> usize {
        Self::extent(self.n, self.b, c)
    }

    /// Shape of a block, or `None` if the id names no block of this layout.
    pub fn shape(&self, id: BlockId) -> Option<(usize, usize)> {
        let (mb, nb, b) = (self.block_rows(), self.block_cols(), self.b);
        let steps = mb.min(nb);
        let BlockId { array, row, col } = id;
        let single = |limit: usize| (col == 0 && row < limit).then_some(());
        match array {
            Array::T => (row < mb && col < nb).then(|| (self.row_extent(row), self.col_extent(col))),
            Array::U => (row < mb && col < mb).then(|| (self.row_extent(row), self.row_extent(col))),
            Array::V => (row < nb && col < nb).then(|| (self.col_extent(row), self.col_extent(col))),
            Array::G => single(mb).map(|_| (self.row_extent(row), b)),
            Array::Y => single(nb).map(|_| (self.col_extent(row), b)),
            Array::S => (row < steps && col >= row && col < nb).then_some((b, b)),
            Array::X => (row < steps && col >= row && col < mb).then_some((b, b)),
            Array::E | Array::D | Array::P | Array::Q => single(steps).map(|_| (b, b)),
        }
    }
}

fn t(r: usize, c: usize) -> BlockId {
    BlockId::new(Array::T, r, c)
}

fn one(a: Array, i: usize) -> BlockId {
    BlockId::new(a, i, 0)
}

fn two(a: Array, i: usize, j: usize) -> BlockId {
    BlockId::new(a, i, j)
}

struct Emitter {
    tasks: Vec<Task>,
    step: usize,
}

impl Emitter {
    fn push(&mut self, kind: TaskKind, ins: &[BlockId], inouts: &[BlockId]) {
        self.tasks.push(Task {
            kind,
            ins: ins.to_vec(),
            inouts: inouts.to_vec(),
            step: self.step,
        });
    }
}

/// Emits the task stream for an `m x n` problem (the shape of `a`).
///
/// Executing the tasks in emission order is one valid schedule; any linear
/// extension of the dependence DAG produces the same bits.
pub fn analyze(a: &Matrix, cfg: &UtvConfig) -> Result<Vec<Task>> {
    cfg.validate()?;
    analyze_layout(Layout::new(a.rows(), a.cols(), cfg.b)?, cfg)
}

pub fn analyze_layout(l: Layout, cfg: &UtvConfig) -> Result<Vec<Task>> {
    use TaskKind::*;
    let (mb, nb) = (l.block_rows(), l.block_cols());
    let mut e = Emitter {
        tasks: Vec::new(),
        step: 0,
    };

    for i in 0..mb.min(nb) {
        e.step = i;
        let (g, y) = (|r| one(Array::G, r), |j| one(Array::Y, j));

        // V stage: sketch, updating QR of Y, right application.
        if i + 1 < nb {
            for r in i..mb {
                e.push(GenerateNormalRandom, &[], &[g(r)]);
            }
            let tn_round = |e: &mut Emitter| {
                for r in i..mb {
                    for j in i..nb {
                        let kind = if r == i { GemmTnOz } else { GemmTnOo };
                        e.push(kind, &[t(r, j), g(r)], &[y(j)]);
                    }
                }
            };
            tn_round(&mut e);
            for _ in 0..cfg.q {
                for j in i..nb {
                    for r in i..mb {
                        let kind = if j == i { GemmNnOz } else { GemmNnOo };
                        e.push(kind, &[t(r, j), y(j)], &[g(r)]);
                    }
                }
                tn_round(&mut e);
            }

            let (s, ecopy) = (|j| two(Array::S, i, j), one(Array::E, i));
            e.push(CompDenseQr, &[], &[y(i), s(i)]);
            e.push(Copy, &[y(i)], &[ecopy]);
            for j in i + 1..nb {
                e.push(CompTdQr, &[], &[y(i), y(j), s(j)]);
            }
            for k in 0..mb {
                e.push(ApplyRightQOfDenseQr, &[ecopy, s(i)], &[t(k, i)]);
            }
            if cfg.build_v {
                for k in 0..nb {
                    e.push(ApplyRightQOfDenseQr, &[ecopy, s(i)], &[two(Array::V, k, i)]);
                }
            }
            for j in i + 1..nb {
                for k in 0..mb {
                    e.push(ApplyRightQTdQr, &[y(j), s(j)], &[t(k, i), t(k, j)]);
                }
                if cfg.build_v {
                    for k in 0..nb {
                        let v = |c| two(Array::V, k, c);
                        e.push(ApplyRightQTdQr, &[y(j), s(j)], &[v(i), v(j)]);
                    }
                }
            }
        }

        // U stage: updating QR down block column i, left application.
        if i + 1 < mb {
            let (x, dcopy) = (|r| two(Array::X, i, r), one(Array::D, i));
            e.push(CompDenseQr, &[], &[t(i, i), x(i)]);
            e.push(Copy, &[t(i, i)], &[dcopy]);
            for r in i + 1..mb {
                e.push(CompTdQr, &[], &[t(i, i), t(r, i), x(r)]);
            }
            for j in i + 1..nb {
                e.push(ApplyLeftQtOfDenseQr, &[dcopy, x(i)], &[t(i, j)]);
            }
            if cfg.build_u {
                for k in 0..mb {
                    e.push(ApplyRightQOfDenseQr, &[dcopy, x(i)], &[two(Array::U, k, i)]);
                }
            }
            for r in i + 1..mb {
                for j in i + 1..nb {
                    e.push(ApplyLeftQtOfTdQr, &[t(r, i), x(r)], &[t(i, j), t(r, j)]);
                }
                if cfg.build_u {
                    for k in 0..mb {
                        let u = |c| two(Array::U, k, c);
                        e.push(ApplyRightQTdQr, &[t(r, i), x(r)], &[u(i), u(r)]);
                    }
                }
            }
            e.push(KeepUpperTriang, &[], &[t(i, i)]);
            for r in i + 1..mb {
                e.push(SetToZero, &[], &[t(r, i)]);
            }
        }

        // SVD stage.
        let (p, q) = (one(Array::P, i), one(Array::Q, i));
        e.push(SvdOfBlock, &[], &[t(i, i), p, q]);
        for j in i + 1..nb {
            e.push(GemmAbta, &[p], &[t(i, j)]);
        }
        for k in 0..i {
            e.push(GemmAabt, &[q], &[t(k, i)]);
        }
        if cfg.build_u {
            for k in 0..mb {
                e.push(GemmAab, &[p], &[two(Array::U, k, i)]);
            }
        }
        if cfg.build_v {
            for k in 0..nb {
                e.push(GemmAabt, &[q], &[two(Array::V, k, i)]);
            }
        }
    }
    Ok(e.tasks)
}

/// Block storage with one lock per block.
///
/// Kernels take locks with `try_read`/`try_write`; contention means two
/// conflicting tasks were scheduled together and is reported as an error
/// rather than waited out.
pub struct BlockStore {
    layout: Layout,
    svd_tol: f64,
    seed: u64,
    blocks: HashMap<BlockId, RwLock<Matrix>>,
}

impl BlockStore {
    /// Allocates every block the tasks mention: `T` from `a`, `U`/`V` as
    /// identities, scratch as zeros.
    pub fn new(a: &Matrix, cfg: &UtvConfig, tasks: &[Task]) -> Result<Self> {
        let layout = Layout::new(a.rows(), a.cols(), cfg.b)?;
        let mut blocks = HashMap::new();
        for task in tasks {
            for &id in task.ins.iter().chain(&task.inouts) {
                if blocks.contains_key(&id) {
                    continue;
                }
                let (r, c) = layout
                    .shape(id)
                    .ok_or_else(|| Error::Graph(format!("operand {id} of `{task}` names no block")))?;
                let (r0, c0) = (id.row * layout.b, id.col * layout.b);
                let m = match id.array {
                    Array::T => a.sub(r0, c0, r, c).to_owned(),
                    Array::U | Array::V if id.row == id.col => Matrix::identity(r),
                    _ => Matrix::zeros(r, c),
                };
                blocks.insert(id, RwLock::new(m));
            }
        }
        Ok(Self {
            layout,
            svd_tol: cfg.svd_tol,
            seed: cfg.seed,
            blocks,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    fn lock(&self, id: BlockId) -> Result<&RwLock<Matrix>> {
        self.blocks
            .get(&id)
            .ok_or_else(|| Error::Graph(format!("block {id} is not allocated")))
    }

    fn read(&self, id: BlockId) -> Result<RwLockReadGuard<'_, Matrix>> {
        self.lock(id)?
            .try_read()
            .map_err(|_| Error::Graph(format!("block {id} is being written concurrently")))
    }

    fn write(&self, id: BlockId) -> Result<RwLockWriteGuard<'_, Matrix>> {
        self.lock(id)?
            .try_write()
            .map_err(|_| Error::Graph(format!("block {id} is in use concurrently")))
    }

    /// Snapshot of one block.
    pub fn get(&self, id: BlockId) -> Result<Matrix> {
        Ok(self.read(id)?.clone())
    }

    /// Reassembles a full matrix from its blocks; blocks never allocated are
    /// taken from `fill`.
    fn assemble(&self, array: Array, rows: usize, cols: usize, fill: Matrix) -> Result<Matrix> {
        let mut out = fill;
        let b = self.layout.b;
        for r in 0..rows.div_ceil(b) {
            for c in 0..cols.div_ceil(b) {
                let id = BlockId::new(array, r, c);
                if let Some(lock) = self.blocks.get(&id) {
                    let blk = lock
                        .read()
                        .map_err(|_| Error::Graph(format!("block {id} poisoned")))?;
                    out.sub_mut(r * b, c * b, blk.rows(), blk.cols()).copy_from(blk.view())?;
                }
            }
        }
        Ok(out)
    }
}

fn operand_err(task: &Task, why: &str) -> Error {
    Error::Graph(format!("`{task}`: {why}"))
}

/// `C = alpha_acc * C + op(A) op(B)` on owned blocks.
fn block_gemm(ta: Trans, a: &Matrix, tb: Trans, b: &Matrix, beta: f64, c: &mut Matrix) -> Result<()> {
    gemm(1.0, ta, a.view(), tb, b.view(), beta, c.view_mut())
}

fn fill_normal(store: &BlockStore, step: usize, r: usize, g: &mut Matrix) {
    // Same stream and column-major positions as the blocked algorithm's
    // `rows(T22) x b` draw, so both see the same sketch.
    let l = store.layout;
    let rng = RngState::new(store.seed).derive(step as u64);
    let total = (l.m - step * l.b) as u64;
    let off = (r * l.b - step * l.b) as u64;
    for c in 0..g.cols() {
        let base = c as u64 * total + off;
        for (k, x) in g.col_mut(c).iter_mut().enumerate() {
            *x = rng.normal_at(base + k as u64);
        }
    }
}

/// Runs one task's kernel against the store.
pub fn execute_task(task: &Task, store: &BlockStore) -> Result<()> {
    use TaskKind::*;
    let (ni, no) = task.kind.arity();
    if task.ins.len() != ni || task.inouts.len() != no {
        return Err(operand_err(task, "operand count does not match the task kind"));
    }
    let rd = |k: usize| store.read(task.ins[k]);
    let wr = |k: usize| store.write(task.inouts[k]);

    match task.kind {
        GenerateNormalRandom => {
            let id = task.inouts[0];
            if id.array != Array::G {
                return Err(operand_err(task, "expects a G block"));
            }
            fill_normal(store, task.step, id.row, &mut *wr(0)?);
        }
        GemmTnOz | GemmTnOo | GemmNnOz | GemmNnOo => {
            let ta = if matches!(task.kind, GemmTnOz | GemmTnOo) { Trans::Yes } else { Trans::No };
            let beta = if matches!(task.kind, GemmTnOo | GemmNnOo) { 1.0 } else { 0.0 };
            block_gemm(ta, &*rd(0)?, Trans::No, &*rd(1)?, beta, &mut *wr(0)?)?;
        }
        CompDenseQr => {
            let mut a = wr(0)?;
            let mut s = wr(1)?;
            let tau = hqr_in_place(a.view_mut());
            let twy = dense_twy(a.view(), &tau);
            if twy.shape() != s.shape() {
                return Err(operand_err(task, "WY factor block has the wrong shape"));
            }
            *s = twy;
        }
        CompTdQr => {
            let mut top = wr(0)?;
            let mut bot = wr(1)?;
            let mut s = wr(2)?;
            let twy = td_qr_in_place(top.view_mut(), bot.view_mut())?;
            if twy.shape() != s.shape() {
                return Err(operand_err(task, "WY factor block has the wrong shape"));
            }
            *s = twy;
        }
        Copy => {
            let src = rd(0)?;
            let mut dst = wr(0)?;
            if src.shape() != dst.shape() {
                return Err(operand_err(task, "copy between blocks of different shapes"));
            }
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
        ApplyRightQOfDenseQr | ApplyLeftQtOfDenseQr => {
            let wy = CompactWY::from_factored(rd(0)?.view(), rd(1)?.view())?;
            let mut blk = wr(0)?;
            if task.kind == ApplyRightQOfDenseQr {
                wy.apply_q_right(blk.view_mut())?;
            } else {
                wy.apply_qt_left(blk.view_mut())?;
            }
        }
        ApplyRightQTdQr | ApplyLeftQtOfTdQr => {
            let (house, twy) = (rd(0)?, rd(1)?);
            let mut first = wr(0)?;
            let mut second = wr(1)?;
            if task.kind == ApplyRightQTdQr {
                apply_q_right_td(house.view(), twy.view(), first.view_mut(), second.view_mut())?;
            } else {
                apply_qt_left_td(house.view(), twy.view(), first.view_mut(), second.view_mut())?;
            }
        }
        KeepUpperTriang => wr(0)?.zero_strict_lower(),
        SetToZero => wr(0)?.as_mut_slice().fill(0.0),
        SvdOfBlock => {
            let mut a = wr(0)?;
            let mut p = wr(1)?;
            let mut q = wr(2)?;
            let svd = svd_block(a.view(), store.svd_tol)?;
            if p.shape() != svd.u.shape() || q.shape() != svd.v.shape() {
                return Err(operand_err(task, "SVD factor blocks have the wrong shape"));
            }
            let diag = Matrix::from_diag(a.rows(), a.cols(), &svd.s);
            *a = diag;
            *p = svd.u;
            *q = svd.v.transpose();
        }
        GemmAbta | GemmAabt | GemmAab => {
            let bm = rd(0)?;
            let mut a = wr(0)?;
            let old = a.clone();
            let mut out = a.view_mut();
            match task.kind {
                GemmAbta => gemm(1.0, Trans::Yes, bm.view(), Trans::No, old.view(), 0.0, out.rb_mut())?,
                GemmAabt => gemm(1.0, Trans::No, old.view(), Trans::Yes, bm.view(), 0.0, out.rb_mut())?,
                _ => gemm(1.0, Trans::No, old.view(), Trans::No, bm.view(), 0.0, out.rb_mut())?,
            }
        }
    }
    Ok(())
}

/// Checks that every operand names a block of the layout and builds the DAG.
pub fn build_dag(tasks: Vec<Task>, layout: Layout) -> Result<TaskGraph<Task>> {
    for task in &tasks {
        for &id in task.ins.iter().chain(&task.inouts) {
            if layout.shape(id).is_none() {
                return Err(operand_err(task, &format!("operand {id} names no block")));
            }
        }
    }
    TaskGraph::build(tasks)
}

/// Output of a traced run.
pub struct AbRun {
    pub result: UtvResult,
    pub graph: TaskGraph<Task>,
    pub events: Vec<TraceEvent>,
}

fn run_direct(a: &Matrix, cfg: &UtvConfig, workers: usize) -> Result<AbRun> {
    let tasks = analyze(a, cfg)?;
    let store = BlockStore::new(a, cfg, &tasks)?;
    let graph = build_dag(tasks, store.layout())?;
    let events = scheduler::execute(&graph, workers, |_, task| execute_task(task, &store))?;

    let (m, n) = a.shape();
    let t = store.assemble(Array::T, m, n, Matrix::zeros(m, n))?;
    let u = if cfg.build_u {
        Some(store.assemble(Array::U, m, m, Matrix::identity(m))?)
    } else {
        None
    };
    let v = if cfg.build_v {
        Some(store.assemble(Array::V, n, n, Matrix::identity(n))?)
    } else {
        None
    };
    Ok(AbRun {
        result: UtvResult {
            t,
            u,
            v,
            config: cfg.clone(),
        },
        graph,
        events,
    })
}

/// randUTV by blocks on `workers` threads, with the task trace.
///
/// With `cfg.qr_first` on a tall input the trace covers the factorization of
/// the R factor only.
pub fn randutv_ab_traced(a: &Matrix, cfg: &UtvConfig, workers: usize) -> Result<AbRun> {
    let mut run = None;
    let result = with_qr_prepass(a, cfg, |x, c| {
        let r = run_direct(x, c, workers)?;
        let res = r.result.clone();
        run = Some(r);
        Ok(res)
    })?;
    let mut run = run.expect("prepass always runs the inner factorization");
    run.result = result;
    Ok(run)
}

/// randUTV by blocks: `A = U T V^T`, bit-identical for every worker count.
pub fn randutv_ab(a: &Matrix, cfg: &UtvConfig, workers: usize) -> Result<UtvResult> {
    Ok(randutv_ab_traced(a, cfg, workers)?.result)
}
