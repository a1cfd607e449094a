//! Supernodal Cholesky numeric kernel for a fixed sparsity pattern.
//!
//! The fill-reducing ordering and supernode partition come from faer's
//! symbolic analysis; everything needed to refactor a new set of values
//! (entry slots and the relative row positions of every update) is
//! precomputed here, so a numeric factorization is straight dense loops.
//!
//! Supernode `s` covers columns `begin[s]..begin[s+1]` of the permuted
//! matrix and is stored column-major as an `h × w` block, `w` the column
//! count and `h = w + |pattern|`. The first `w` rows are the diagonal block
//! (lower part used), the rest follow the supernode's off-diagonal pattern.

use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::linalg::{SupernodalThreshold, SymbolicSupernodalParams};
use faer::sparse::SymbolicSparseColMatRef;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch, LltError};
use faer::linalg::matmul::triangular::{matmul, BlockStructure};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::reborrow::{Reborrow, ReborrowMut};
use faer::{Accum, MatMut, Par, Side};

/// Supernodes wider than this go through dense BLAS-3 kernels; narrower
/// ones use fused scalar loops.
const DENSE_MIN_WIDTH: usize = 9;

/// Amalgamation thresholds: merge adjacent supernodes of up to `n` total
/// columns while the share of explicit zeros stays below `z`.
const RELAX: &[(usize, f64)] = &[(4, 1.0), (16, 0.8), (48, 0.1)];

/// Updates from one supernode into the columns of one ancestor.
#[derive(Debug, Clone, Copy)]
struct Run {
    target: usize,
    /// Pattern indices `first..end` of the source are target columns.
    first: usize,
    end: usize,
    /// Offset into `rel` of the target row positions for pattern
    /// indices `first..`.
    rel: usize,
}

/// Per-thread buffers for [`SupernodalPlan::factorize`].
pub(crate) struct FactorScratch {
    update: Vec<f64>,
    mem: MemBuffer,
}

#[derive(Debug, Clone)]
pub(crate) struct SupernodalPlan {
    n: usize,
    /// `perm_fwd[new] = old`
    perm_fwd: Vec<usize>,
    /// `perm_inv[old] = new`
    perm_inv: Vec<usize>,
    begin: Vec<usize>,
    val_ptr: Vec<usize>,
    pat_ptr: Vec<usize>,
    pattern: Vec<usize>,
    col_sn: Vec<usize>,
    run_ptr: Vec<usize>,
    runs: Vec<Run>,
    rel: Vec<u32>,
    /// Largest pattern among dense-path supernodes.
    max_dense_pattern: usize,
    max_dense_width: usize,
}

impl SupernodalPlan {
    /// Analyzes the lower-triangular CSC pattern of an `n × n` symmetric matrix.
    pub fn analyze(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Result<Self, String> {
        let pattern_ref = SymbolicSparseColMatRef::new_checked(n, n, col_ptr, None, row_idx);
        let params = CholeskySymbolicParams {
            // the forced-supernodal threshold still picks simplicial when the
            // estimated flop count is zero
            supernodal_flop_ratio_threshold: SupernodalThreshold(-1.0),
            supernodal_params: SymbolicSupernodalParams { relax: Some(RELAX) },
            ..Default::default()
        };
        let symbolic = factorize_symbolic_cholesky(pattern_ref, Side::Lower, SymmetricOrdering::Amd, params)
            .map_err(|e| format!("{e:?}"))?;
        let (perm_fwd, perm_inv) = match symbolic.perm() {
            Some(p) => (p.arrays().0.to_vec(), p.arrays().1.to_vec()),
            None => ((0..n).collect(), (0..n).collect()),
        };
        let SymbolicCholeskyRaw::Supernodal(sn) = symbolic.raw() else {
            return Err("expected a supernodal symbolic factorization".into());
        };
        let ns = sn.n_supernodes();
        let begin: Vec<usize> = sn.supernode_begin().iter().copied().chain([n]).collect();
        let mut pat_ptr = vec![0];
        let mut pattern = Vec::new();
        let mut val_ptr = vec![0];
        let mut col_sn = vec![0; n];
        for s in 0..ns {
            let pat = sn.supernode(s).pattern();
            pattern.extend_from_slice(pat);
            pat_ptr.push(pattern.len());
            let w = begin[s + 1] - begin[s];
            val_ptr.push(val_ptr[s] + w * (w + pat.len()));
            col_sn[begin[s]..begin[s + 1]].fill(s);
        }
        let mut plan = Self {
            n,
            perm_fwd,
            perm_inv,
            max_dense_pattern: (0..ns)
                .filter(|&s| begin[s + 1] - begin[s] >= DENSE_MIN_WIDTH)
                .map(|s| pat_ptr[s + 1] - pat_ptr[s])
                .max()
                .unwrap_or(0),
            max_dense_width: (0..ns).map(|s| begin[s + 1] - begin[s]).max().unwrap_or(0),
            begin,
            val_ptr,
            pat_ptr,
            pattern,
            col_sn,
            run_ptr: vec![0],
            runs: Vec::new(),
            rel: Vec::new(),
        };
        plan.build_runs()?;
        Ok(plan)
    }

    fn pattern_of(&self, s: usize) -> &[usize] {
        &self.pattern[self.pat_ptr[s]..self.pat_ptr[s + 1]]
    }

    fn width(&self, s: usize) -> usize {
        self.begin[s + 1] - self.begin[s]
    }

    /// Row position of permuted row `r` inside supernode `t`'s block.
    fn row_pos(&self, t: usize, r: usize) -> Option<usize> {
        if (self.begin[t]..self.begin[t + 1]).contains(&r) {
            Some(r - self.begin[t])
        } else {
            self.pattern_of(t).binary_search(&r).ok().map(|i| self.width(t) + i)
        }
    }

    fn build_runs(&mut self) -> Result<(), String> {
        let ns = self.begin.len() - 1;
        let mut runs = Vec::new();
        let mut rel = Vec::new();
        let mut run_ptr = vec![0];
        for s in 0..ns {
            let pat = self.pattern_of(s);
            let mut i = 0;
            while i < pat.len() {
                let t = self.col_sn[pat[i]];
                let mut end = i + 1;
                while end < pat.len() && self.col_sn[pat[end]] == t {
                    end += 1;
                }
                let offset = rel.len();
                for &r in &pat[i..] {
                    let pos = self
                        .row_pos(t, r)
                        .ok_or_else(|| format!("row {r} missing from supernode {t}"))?;
                    rel.push(u32::try_from(pos).map_err(|e| e.to_string())?);
                }
                runs.push(Run { target: t, first: i, end, rel: offset });
                i = end;
            }
            run_ptr.push(runs.len());
        }
        self.runs = runs;
        self.rel = rel;
        self.run_ptr = run_ptr;
        Ok(())
    }

    pub fn len_val(&self) -> usize {
        *self.val_ptr.last().unwrap()
    }

    pub fn scratch(&self) -> FactorScratch {
        FactorScratch {
            update: vec![0.0; self.max_dense_pattern * self.max_dense_pattern],
            mem: MemBuffer::new(cholesky_in_place_scratch::<f64>(self.max_dense_width, Par::Seq, Default::default())),
        }
    }

    pub fn perm_inv(&self) -> &[usize] {
        &self.perm_inv
    }

    pub fn perm_fwd(&self) -> &[usize] {
        &self.perm_fwd
    }

    /// Value slot of lower entry `(row, col)` given in original ordering.
    pub fn slot(&self, row: usize, col: usize) -> usize {
        let (p, q) = (self.perm_inv[row], self.perm_inv[col]);
        let (r, c) = (p.max(q), p.min(q));
        let s = self.col_sn[c];
        let h = self.width(s) + self.pattern_of(s).len();
        let pos = self.row_pos(s, r).expect("entry outside the symbolic pattern");
        self.val_ptr[s] + (c - self.begin[s]) * h + pos
    }

    /// Factors in place. `values` holds the assembled matrix in the block
    /// layout on entry and `L` on exit. On failure returns the permuted
    /// column with a non-positive pivot.
    pub fn factorize(&self, values: &mut [f64], scratch: &mut FactorScratch) -> Result<(), usize> {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the required CPU feature was detected at runtime
                return unsafe { self.factorize_avx512(values, scratch) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: as above
                return unsafe { self.factorize_avx2(values, scratch) };
            }
        }
        self.factorize_impl(values, scratch)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn factorize_avx512(&self, values: &mut [f64], scratch: &mut FactorScratch) -> Result<(), usize> {
        self.factorize_impl(values, scratch)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn factorize_avx2(&self, values: &mut [f64], scratch: &mut FactorScratch) -> Result<(), usize> {
        self.factorize_impl(values, scratch)
    }

    #[inline(always)]
    fn factorize_impl(&self, values: &mut [f64], scratch: &mut FactorScratch) -> Result<(), usize> {
        let ns = self.begin.len() - 1;
        for s in 0..ns {
            let w = self.width(s);
            let pat = self.pattern_of(s);
            let p = pat.len();
            let h = w + p;
            let (head, tail) = values.split_at_mut(self.val_ptr[s + 1]);
            let block = &mut head[self.val_ptr[s]..];
            if w >= DENSE_MIN_WIDTH {
                self.dense_panel(s, block, scratch)?;
            } else {
                panel(block, w, h).map_err(|j| self.begin[s] + j)?;
            }

            // push L21 L21ᵀ into the ancestors
            let block = &*block;
            let base = self.val_ptr[s + 1];
            for run in &self.runs[self.run_ptr[s]..self.run_ptr[s + 1]] {
                let t = run.target;
                let ht = self.width(t) + self.pattern_of(t).len();
                let t_off = self.val_ptr[t] - base;
                for i in run.first..run.end {
                    let c = pat[i] - self.begin[t];
                    let col_t = &mut tail[t_off + c * ht..t_off + (c + 1) * ht];
                    let rel = &self.rel[run.rel + (i - run.first)..run.rel + (p - run.first)];
                    let row = w + i;
                    match w {
                        1 => scatter_update::<1>(col_t, rel, block, h, row),
                        2 => scatter_update::<2>(col_t, rel, block, h, row),
                        3 => scatter_update::<3>(col_t, rel, block, h, row),
                        4 => scatter_update::<4>(col_t, rel, block, h, row),
                        5 => scatter_update::<5>(col_t, rel, block, h, row),
                        6 => scatter_update::<6>(col_t, rel, block, h, row),
                        7 => scatter_update::<7>(col_t, rel, block, h, row),
                        8 => scatter_update::<8>(col_t, rel, block, h, row),
                        _ => {
                            let u = &scratch.update[i * p + i..(i + 1) * p];
                            for (&pos, &v) in rel.iter().zip(u) {
                                col_t[pos as usize] -= v;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Factors a wide supernode's panel with dense kernels and leaves
    /// `L21 L21ᵀ` (lower part, `p × p` column-major) in `scratch.update`.
    fn dense_panel(&self, s: usize, block: &mut [f64], scratch: &mut FactorScratch) -> Result<(), usize> {
        let w = self.width(s);
        let p = self.pattern_of(s).len();
        let h = w + p;
        let full = MatMut::from_column_major_slice_with_stride_mut(block, h, w, h);
        let (mut l11, mut l21) = full.split_at_row_mut(w);
        cholesky_in_place(
            l11.rb_mut(),
            Default::default(),
            Par::Seq,
            MemStack::new(&mut scratch.mem),
            Default::default(),
        )
        .map_err(|LltError::NonPositivePivot { index }| self.begin[s] + index)?;
        if p == 0 {
            return Ok(());
        }
        // L21 = A21 L11⁻ᵀ, solved as L11 L21ᵀ = A21ᵀ
        solve_lower_triangular_in_place(l11.rb(), l21.rb_mut().transpose_mut(), Par::Seq);
        let update = MatMut::from_column_major_slice_mut(&mut scratch.update[..p * p], p, p);
        let l21 = l21.rb();
        matmul(
            update,
            BlockStructure::TriangularLower,
            Accum::Replace,
            l21,
            BlockStructure::Rectangular,
            l21.transpose(),
            BlockStructure::Rectangular,
            1.0,
            Par::Seq,
        );
        Ok(())
    }

    /// Solves `L Lᵀ x = b` in place, `x` in permuted ordering.
    pub fn solve_in_place(&self, l: &[f64], x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let ns = self.begin.len() - 1;
        for s in 0..ns {
            let (b, w) = (self.begin[s], self.width(s));
            let pat = self.pattern_of(s);
            let h = w + pat.len();
            let block = &l[self.val_ptr[s]..self.val_ptr[s + 1]];
            for k in 0..w {
                let col = &block[k * h..(k + 1) * h];
                let xk = x[b + k] / col[k];
                x[b + k] = xk;
                for r in k + 1..w {
                    x[b + r] -= col[r] * xk;
                }
                for (&row, &lv) in pat.iter().zip(&col[w..]) {
                    x[row] -= lv * xk;
                }
            }
        }
        for s in (0..ns).rev() {
            let (b, w) = (self.begin[s], self.width(s));
            let pat = self.pattern_of(s);
            let h = w + pat.len();
            let block = &l[self.val_ptr[s]..self.val_ptr[s + 1]];
            for k in (0..w).rev() {
                let col = &block[k * h..(k + 1) * h];
                let mut acc = x[b + k];
                for r in k + 1..w {
                    acc -= col[r] * x[b + r];
                }
                for (&row, &lv) in pat.iter().zip(&col[w..]) {
                    acc -= lv * x[row];
                }
                x[b + k] = acc / col[k];
            }
        }
    }
}

/// Left-looking dense Cholesky of a narrow `h × w` panel in place. Returns
/// the local column of a non-positive pivot.
#[inline(always)]
fn panel(block: &mut [f64], w: usize, h: usize) -> Result<(), usize> {
    for j in 0..w {
        let (done, rest) = block.split_at_mut(j * h);
        let col_j = &mut rest[j..h];
        let done = &*done;
        for k in 0..j {
            let c = done[k * h + j];
            for (d, &v) in col_j.iter_mut().zip(&done[k * h + j..(k + 1) * h]) {
                *d -= c * v;
            }
        }
        let d = col_j[0];
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        col_j[0] = d;
        let inv = 1.0 / d;
        for v in &mut col_j[1..] {
            *v *= inv;
        }
    }
    Ok(())
}

/// Update from a supernode of width `W`: for each row `r` from `row` down,
/// `col_t[rel[r - row]] -= Σ_k L[row, k] · L[r, k]`.
#[inline(always)]
fn scatter_update<const W: usize>(col_t: &mut [f64], rel: &[u32], block: &[f64], h: usize, row: usize) {
    let n = rel.len();
    let coef: [f64; W] = std::array::from_fn(|k| block[k * h + row]);
    let src: [&[f64]; W] = std::array::from_fn(|k| &block[k * h + row..k * h + row + n]);
    for (idx, &pos) in rel.iter().enumerate() {
        let mut acc = coef[0] * src[0][idx];
        for k in 1..W {
            acc += coef[k] * src[k][idx];
        }
        col_t[pos as usize] -= acc;
    }
}
