//! Dense column-major storage and borrowed views.

use std::fmt;
use std::marker::PhantomData;
use std::ops::Range;

/// Dense column-major real matrix with an explicit leading dimension.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    ld: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::zeros_ld(rows, cols, rows.max(1))
    }

    /// Zero matrix whose columns are `ld` apart in storage (`ld >= rows`).
    pub fn zeros_ld(rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= rows.max(1), "leading dimension {ld} < rows {rows}");
        Matrix {
            rows,
            cols,
            ld,
            data: vec![0.0; ld * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from column-major values; `data.len()` must equal `rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "column-major data length");
        if rows == 0 {
            return Self::zeros(0, cols);
        }
        Matrix {
            rows,
            cols,
            ld: rows,
            data,
        }
    }

    /// Row-major literal helper, mostly for tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn leading_dim(&self) -> usize {
        self.ld
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.ld..j * self.ld + self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.ld..j * self.ld + self.rows]
    }

    /// Column-major copy of the logical entries (padding dropped).
    pub fn to_col_major(&self) -> Vec<f64> {
        (0..self.cols)
            .flat_map(|j| self.col(j).iter().copied())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn copy_block(&self, rows: Range<usize>, cols: Range<usize>) -> Matrix {
        self.view().sub(rows, cols).to_owned()
    }

    pub fn frobenius(&self) -> f64 {
        self.view().frobenius()
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.cols)
            .flat_map(|j| self.col(j).iter())
            .fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    /// `self - other`, entrywise.
    pub fn sub_matrix(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)])
    }

    /// Copies the lower triangle onto the upper one.
    pub fn mirror_lower(&mut self) {
        for j in 0..self.cols {
            for i in 0..j.min(self.rows) {
                self[(i, j)] = self[(j, i)];
            }
        }
    }

    /// Largest `|a_ij - a_ji|` over the square part.
    pub fn asymmetry(&self) -> f64 {
        let n = self.rows.min(self.cols);
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in j + 1..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Bitwise equality of the logical entries.
    pub fn bit_eq(&self, other: &Matrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (0..self.cols).all(|j| {
                self.col(j)
                    .iter()
                    .zip(other.col(j))
                    .all(|(a, b)| a.to_bits() == b.to_bits())
            })
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef {
            ptr: self.data.as_ptr(),
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub(crate) fn as_mut_ptr(&mut self) -> *mut f64 {
        self.data.as_mut_ptr()
    }

    pub fn view_mut(&mut self) -> MatMut<'_> {
        MatMut {
            ptr: self.data.as_mut_ptr(),
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i},{j}) out of bounds"
        );
        &self.data[i + j * self.ld]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i},{j}) out of bounds"
        );
        &mut self.data[i + j * self.ld]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} (ld {})", self.rows, self.cols, self.ld)?;
        for i in 0..self.rows.min(12) {
            for j in 0..self.cols.min(12) {
                write!(f, " {:>11.4e}", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn check_range(r: &Range<usize>, len: usize, what: &str) {
    assert!(
        r.start <= r.end && r.end <= len,
        "{what} range {r:?} outside 0..{len}"
    );
}

/// Shared view of a column-major block.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    ptr: *const f64,
    rows: usize,
    cols: usize,
    ld: usize,
    _life: PhantomData<&'a f64>,
}

// SAFETY: a MatRef is a shared borrow of f64 data.
unsafe impl Send for MatRef<'_> {}
unsafe impl Sync for MatRef<'_> {}

impl<'a> MatRef<'a> {
    /// # Safety
    /// `ptr` must address `rows x cols` entries with stride `ld`, valid and
    /// not mutated for `'a`.
    pub(crate) unsafe fn from_raw(ptr: *const f64, rows: usize, cols: usize, ld: usize) -> Self {
        MatRef {
            ptr,
            rows,
            cols,
            ld,
            _life: PhantomData,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        // SAFETY: bounds checked above (debug) and by construction.
        unsafe { *self.ptr.add(i + j * self.ld) }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &'a [f64] {
        assert!(j < self.cols);
        if self.rows == 0 {
            return &[];
        }
        // SAFETY: column j holds `rows` contiguous valid entries.
        unsafe { std::slice::from_raw_parts(self.ptr.add(j * self.ld), self.rows) }
    }

    pub fn sub(self, rows: Range<usize>, cols: Range<usize>) -> MatRef<'a> {
        check_range(&rows, self.rows, "row");
        check_range(&cols, self.cols, "col");
        let off = if rows.is_empty() || cols.is_empty() {
            0
        } else {
            rows.start + cols.start * self.ld
        };
        MatRef {
            // SAFETY: offset stays inside the parent block.
            ptr: unsafe { self.ptr.add(off) },
            rows: rows.len(),
            cols: cols.len(),
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub fn to_owned(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.cols {
            for &x in self.col(j) {
                s += x * x;
            }
        }
        s.sqrt()
    }
}

/// Exclusive view of a column-major block. Splitting yields disjoint views.
pub struct MatMut<'a> {
    ptr: *mut f64,
    rows: usize,
    cols: usize,
    ld: usize,
    _life: PhantomData<&'a mut f64>,
}

// SAFETY: a MatMut is an exclusive borrow of f64 data.
unsafe impl Send for MatMut<'_> {}
unsafe impl Sync for MatMut<'_> {}

impl<'a> MatMut<'a> {
    /// # Safety
    /// `ptr` must address `rows x cols` entries with stride `ld`, valid and
    /// not aliased by any other live view for `'a`.
    pub(crate) unsafe fn from_raw(ptr: *mut f64, rows: usize, cols: usize, ld: usize) -> Self {
        MatMut {
            ptr,
            rows,
            cols,
            ld,
            _life: PhantomData,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        // SAFETY: in-bounds by construction.
        unsafe { *self.ptr.add(i + j * self.ld) }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        // SAFETY: in-bounds by construction, exclusive access.
        unsafe { *self.ptr.add(i + j * self.ld) = v }
    }

    pub fn col(&self, j: usize) -> &[f64] {
        self.as_ref().col(j)
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        assert!(j < self.cols);
        if self.rows == 0 {
            return &mut [];
        }
        // SAFETY: column j holds `rows` contiguous entries owned by this view.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.add(j * self.ld), self.rows) }
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef {
            ptr: self.ptr,
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    /// Reborrow with a shorter lifetime.
    pub fn rb(&mut self) -> MatMut<'_> {
        MatMut {
            ptr: self.ptr,
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub fn into_ref(self) -> MatRef<'a> {
        MatRef {
            ptr: self.ptr,
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub fn sub(self, rows: Range<usize>, cols: Range<usize>) -> MatMut<'a> {
        check_range(&rows, self.rows, "row");
        check_range(&cols, self.cols, "col");
        let off = if rows.is_empty() || cols.is_empty() {
            0
        } else {
            rows.start + cols.start * self.ld
        };
        MatMut {
            // SAFETY: offset stays inside the parent block.
            ptr: unsafe { self.ptr.add(off) },
            rows: rows.len(),
            cols: cols.len(),
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub fn split_cols(self, at: usize) -> (MatMut<'a>, MatMut<'a>) {
        let (r, c) = (self.rows, self.cols);
        assert!(at <= c);
        // SAFETY: the two column ranges are disjoint.
        let me: MatMut<'a> = unsafe { MatMut::from_raw(self.ptr, r, c, self.ld) };
        let right = MatMut {
            ptr: self.ptr,
            rows: r,
            cols: c,
            ld: self.ld,
            _life: PhantomData,
        };
        (me.sub(0..r, 0..at), right.sub(0..r, at..c))
    }

    pub fn split_rows(self, at: usize) -> (MatMut<'a>, MatMut<'a>) {
        let (r, c) = (self.rows, self.cols);
        assert!(at <= r);
        // SAFETY: the two row ranges are disjoint.
        let me: MatMut<'a> = unsafe { MatMut::from_raw(self.ptr, r, c, self.ld) };
        let bottom = MatMut {
            ptr: self.ptr,
            rows: r,
            cols: c,
            ld: self.ld,
            _life: PhantomData,
        };
        (me.sub(0..at, 0..c), bottom.sub(at..r, 0..c))
    }

    pub fn fill(&mut self, v: f64) {
        for j in 0..self.cols {
            self.col_mut(j).fill(v);
        }
    }

    pub fn copy_from(&mut self, src: MatRef<'_>) {
        assert_eq!((self.rows, self.cols), (src.rows(), src.cols()));
        for j in 0..self.cols {
            self.col_mut(j).copy_from_slice(src.col(j));
        }
    }
}
