//! Floating-point operation accounting. A multiply-add counts as 2 flops.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlopClass {
    /// General matrix products.
    Matmul,
    /// Symmetric products and rank-2k updates on one triangle.
    Symmetric,
    /// Householder generation and in-panel level-2 work.
    Panel,
    /// Triangular factor assembly (T and W = Y T).
    Compact,
}

impl FlopClass {
    pub const ALL: [FlopClass; 4] = [
        FlopClass::Matmul,
        FlopClass::Symmetric,
        FlopClass::Panel,
        FlopClass::Compact,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FlopClass::Matmul => "matmul",
            FlopClass::Symmetric => "symmetric",
            FlopClass::Panel => "panel",
            FlopClass::Compact => "compact",
        }
    }
}

/// Thread-safe per-class counters; monotone between resets.
#[derive(Debug, Default)]
pub struct FlopCounter {
    counts: [AtomicU64; 4],
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&self, class: FlopClass, flops: u64) {
        self.counts[class.index()].fetch_add(flops, Ordering::Relaxed);
    }

    pub fn reset(&self) {
        for c in &self.counts {
            c.store(0, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> FlopSnapshot {
        let mut per_class = [0u64; 4];
        for (dst, c) in per_class.iter_mut().zip(&self.counts) {
            *dst = c.load(Ordering::Relaxed);
        }
        FlopSnapshot { per_class }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopSnapshot {
    pub per_class: [u64; 4],
}

impl FlopSnapshot {
    pub fn get(&self, class: FlopClass) -> u64 {
        self.per_class[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.per_class.iter().sum()
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &FlopSnapshot) -> FlopSnapshot {
        let mut per_class = [0u64; 4];
        for (i, d) in per_class.iter_mut().enumerate() {
            *d = self.per_class[i] - earlier.per_class[i];
        }
        FlopSnapshot { per_class }
    }
}

impl fmt::Display for FlopSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in FlopClass::ALL.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}={}", c.name(), self.get(*c))?;
        }
        write!(f, " total={}", self.total())
    }
}
