//! Patch scoring and budget-constrained resolution-level allocation.

use thiserror::Error;

use crate::fusion::RelevanceMap;

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("patch size must be positive")]
    ZeroPatchSize,
    #[error("{height}x{width} image does not tile into {patch}x{patch} patches")]
    UntiledImage {
        height: usize,
        width: usize,
        patch: usize,
    },
    #[error("map is {actual_h}x{actual_w}, grid expects {expected_h}x{expected_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        actual_h: usize,
        actual_w: usize,
    },
    #[error("rate table is empty")]
    EmptyRateTable,
    #[error("rate table must start at 0, starts at {0}")]
    NonZeroFirstRate(u32),
    #[error("rate table must be strictly ascending")]
    NotAscending,
    #[error("rate table has {0} levels, at most 255 are supported")]
    TooManyLevels(usize),
    #[error("channel rate {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("level {level} out of range for a {levels}-level table")]
    InvalidLevel { level: u8, levels: usize },
}

/// Non-overlapping `patch x patch` tiling of an image, patches in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    patch: usize,
    rows: usize,
    cols: usize,
}

impl PatchGrid {
    pub const DEFAULT_PATCH: usize = 8;

    pub fn new(height: usize, width: usize, patch: usize) -> Result<Self, AllocationError> {
        if patch == 0 {
            return Err(AllocationError::ZeroPatchSize);
        }
        if !height.is_multiple_of(patch) || !width.is_multiple_of(patch) {
            return Err(AllocationError::UntiledImage {
                height,
                width,
                patch,
            });
        }
        Ok(Self {
            patch,
            rows: height / patch,
            cols: width / patch,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch
    }

    pub fn width(&self) -> usize {
        self.cols * self.patch
    }

    /// Top-left pixel of patch `i`.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        ((i % self.cols) * self.patch, (i / self.cols) * self.patch)
    }
}

/// Mean relevance per patch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores(Vec<f32>);

impl PatchScores {
    pub fn new(scores: Vec<f32>) -> Self {
        Self(scores)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Averages the relevance values inside each patch.
pub fn patch_scores(map: &RelevanceMap, grid: &PatchGrid) -> Result<PatchScores, AllocationError> {
    if map.height() != grid.height() || map.width() != grid.width() {
        return Err(AllocationError::DimensionMismatch {
            expected_h: grid.height(),
            expected_w: grid.width(),
            actual_h: map.height(),
            actual_w: map.width(),
        });
    }
    let p = grid.patch_size();
    let area = (p * p) as f64;
    let values = map.values();
    let scores = (0..grid.len())
        .map(|i| {
            let (x0, y0) = grid.origin(i);
            let mut sum = 0f64;
            for y in y0..y0 + p {
                let row = &values[y * map.width() + x0..y * map.width() + x0 + p];
                sum += row.iter().map(|&v| v as f64).sum::<f64>();
            }
            (sum / area) as f32
        })
        .collect();
    Ok(PatchScores(scores))
}

/// Bytes per patch for each resolution level, ascending from 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateTable(Vec<u32>);

impl Default for RateTable {
    fn default() -> Self {
        Self(vec![0, 12, 24, 48, 192])
    }
}

impl RateTable {
    pub fn new(rates: Vec<u32>) -> Result<Self, AllocationError> {
        match rates.first() {
            None => return Err(AllocationError::EmptyRateTable),
            Some(&r) if r != 0 => return Err(AllocationError::NonZeroFirstRate(r)),
            _ => {}
        }
        if rates.len() > u8::MAX as usize {
            return Err(AllocationError::TooManyLevels(rates.len()));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AllocationError::NotAscending);
        }
        Ok(Self(rates))
    }

    pub fn rates(&self) -> &[u32] {
        &self.0
    }

    pub fn levels(&self) -> usize {
        self.0.len()
    }

    pub fn rate(&self, level: u8) -> u32 {
        self.0[level as usize]
    }

    pub fn max_rate(&self) -> u32 {
        *self.0.last().expect("rate table is never empty")
    }

    pub fn max_level(&self) -> u8 {
        (self.0.len() - 1) as u8
    }

    /// Payload bytes when every one of `patches` is sent at the top level.
    pub fn full_payload(&self, patches: usize) -> u64 {
        patches as u64 * self.max_rate() as u64
    }
}

/// Converts a channel-rate fraction into a byte budget, rounding down.
///
/// Products within 1e-6 of an integer snap to it, so decimal fractions such
/// as 0.3 are not pushed one byte below their exact value by binary rounding.
pub fn budget_from_fraction(fraction: f64, full_payload: u64) -> Result<u64, AllocationError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AllocationError::InvalidFraction(fraction));
    }
    let exact = fraction * full_payload as f64;
    let nearest = exact.round();
    let budget = if (exact - nearest).abs() < 1e-6 {
        nearest
    } else {
        exact.floor()
    };
    Ok((budget as u64).min(full_payload))
}

/// Per-patch level assignment under a byte budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    levels: Vec<u8>,
    table: RateTable,
    total: u64,
    budget: u64,
}

impl AllocationPlan {
    /// Builds a plan from explicit levels, e.g. a fixed baseline assignment.
    /// The budget is set to the plan's own payload size.
    pub fn from_levels(levels: Vec<u8>, table: RateTable) -> Result<Self, AllocationError> {
        if let Some(&bad) = levels.iter().find(|&&l| l as usize >= table.levels()) {
            return Err(AllocationError::InvalidLevel {
                level: bad,
                levels: table.levels(),
            });
        }
        let total = levels.iter().map(|&l| table.rate(l) as u64).sum();
        Ok(Self {
            levels,
            table,
            total,
            budget: total,
        })
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn table(&self) -> &RateTable {
        &self.table
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn leftover(&self) -> u64 {
        self.budget - self.total
    }

    pub fn rate_of(&self, patch: usize) -> u32 {
        self.table.rate(self.levels[patch])
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Greedy allocation: visit patches by descending score (ties by ascending
/// index) and give each the largest level that still fits the remaining budget.
pub fn allocate(scores: &PatchScores, table: &RateTable, budget: u64) -> AllocationPlan {
    let s = scores.as_slice();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let rates = table.rates();
    let mut levels = vec![0u8; s.len()];
    let mut remaining = budget;
    for i in order {
        // rates[0] == 0 always fits
        let level = rates
            .iter()
            .rposition(|&r| r as u64 <= remaining)
            .unwrap_or(0);
        levels[i] = level as u8;
        remaining -= rates[level] as u64;
    }
    AllocationPlan {
        levels,
        table: table.clone(),
        total: budget - remaining,
        budget,
    }
}

/// Summary of a plan: how many patches sit at each level, and budget use.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanStats {
    pub counts: Vec<usize>,
    pub total: u64,
    pub budget: u64,
    pub utilization: f64,
}

pub fn plan_stats(plan: &AllocationPlan) -> PlanStats {
    let mut counts = vec![0usize; plan.table.levels()];
    for &l in &plan.levels {
        counts[l as usize] += 1;
    }
    let utilization = if plan.budget == 0 {
        0.0
    } else {
        plan.total as f64 / plan.budget as f64
    };
    PlanStats {
        counts,
        total: plan.total,
        budget: plan.budget,
        utilization,
    }
}
