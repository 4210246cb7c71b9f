//! Domain types shared by every stage of the pipeline.

use crate::error::{GpzError, Result};
use crate::scalar::{Coordinate, Precision};

pub const MAX_DIMS: usize = 3;

/// Particles per lane; block sizes are multiples of this.
pub const LANE_WIDTH: usize = 32;

pub const DEFAULT_BLOCK_SIZE: usize = 1024;
pub const DEFAULT_SEGS_PER_AXIS: u32 = 32;

/// Particle positions stored as one contiguous array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    axes: Vec<Vec<T>>,
}

impl<T: Coordinate> Dataset<T> {
    /// Builds a dataset from per-axis arrays, checking lengths and finiteness.
    pub fn new(axes: Vec<Vec<T>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIMS {
            return Err(GpzError::domain(format!("dims must be 1..=3, got {}", axes.len())));
        }
        let count = axes[0].len();
        if axes.iter().any(|a| a.len() != count) {
            return Err(GpzError::domain("axis arrays differ in length"));
        }
        for (a, axis) in axes.iter().enumerate() {
            if let Some(i) = axis.iter().position(|v| !v.is_finite()) {
                return Err(GpzError::domain(format!("non-finite coordinate at particle {i}, axis {a}")));
            }
        }
        Ok(Dataset { axes })
    }

    pub fn empty(dims: usize) -> Result<Self> {
        Self::new(vec![Vec::new(); dims])
    }

    /// Splits `x0 y0 z0 x1 y1 z1 ...` into per-axis arrays.
    pub fn from_interleaved(values: &[T], dims: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(GpzError::domain(format!("dims must be 1..=3, got {dims}")));
        }
        if !values.len().is_multiple_of(dims) {
            return Err(GpzError::domain(format!(
                "{} interleaved values is not a multiple of {dims} dims",
                values.len()
            )));
        }
        let mut axes = vec![Vec::with_capacity(values.len() / dims); dims];
        for chunk in values.chunks_exact(dims) {
            for (axis, &v) in axes.iter_mut().zip(chunk) {
                axis.push(v);
            }
        }
        Self::new(axes)
    }

    pub(crate) fn from_axes_unchecked(axes: Vec<Vec<T>>) -> Self {
        Dataset { axes }
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn axes(&self) -> &[Vec<T>] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &[T] {
        &self.axes[a]
    }

    pub fn into_axes(self) -> Vec<Vec<T>> {
        self.axes
    }

    /// Size of the raw coordinate payload in bytes.
    pub fn byte_size(&self) -> usize {
        self.len() * self.dims() * T::PRECISION.bytes()
    }

    /// Per-axis slices of particles `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Vec<&[T]> {
        self.axes.iter().map(|a| &a[range.clone()]).collect()
    }

    /// Minimum and maximum over every coordinate of every axis.
    pub fn joint_range(&self) -> Option<(T, T)> {
        let mut it = self.axes.iter().flatten().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

/// A dataset whose precision is only known at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyDataset {
    F32(Dataset<f32>),
    F64(Dataset<f64>),
}

impl AnyDataset {
    pub fn precision(&self) -> Precision {
        match self {
            AnyDataset::F32(_) => Precision::F32,
            AnyDataset::F64(_) => Precision::F64,
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            AnyDataset::F32(d) => d.dims(),
            AnyDataset::F64(d) => d.dims(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyDataset::F32(d) => d.len(),
            AnyDataset::F64(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_size(&self) -> usize {
        match self {
            AnyDataset::F32(d) => d.byte_size(),
            AnyDataset::F64(d) => d.byte_size(),
        }
    }
}

impl From<Dataset<f32>> for AnyDataset {
    fn from(d: Dataset<f32>) -> Self {
        AnyDataset::F32(d)
    }
}

impl From<Dataset<f64>> for AnyDataset {
    fn from(d: Dataset<f64>) -> Self {
        AnyDataset::F64(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbMode {
    Absolute,
    /// Fraction of the joint value range over all axes.
    RangeRelative,
}

impl EbMode {
    pub(crate) fn tag(self) -> u8 {
        match self {
            EbMode::Absolute => 0,
            EbMode::RangeRelative => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(EbMode::Absolute),
            1 => Some(EbMode::RangeRelative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressConfig {
    pub error_bound: f64,
    pub eb_mode: EbMode,
    pub block_size: usize,
    pub target_segs_per_axis: u32,
    pub preserve_order: bool,
}

impl Default for CompressConfig {
    fn default() -> Self {
        CompressConfig {
            error_bound: 1e-3,
            eb_mode: EbMode::RangeRelative,
            block_size: DEFAULT_BLOCK_SIZE,
            target_segs_per_axis: DEFAULT_SEGS_PER_AXIS,
            preserve_order: false,
        }
    }
}

impl CompressConfig {
    pub fn absolute(eb: f64) -> Self {
        CompressConfig { error_bound: eb, eb_mode: EbMode::Absolute, ..Default::default() }
    }

    pub fn relative(eb: f64) -> Self {
        CompressConfig { error_bound: eb, eb_mode: EbMode::RangeRelative, ..Default::default() }
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn with_segs_per_axis(mut self, segs: u32) -> Self {
        self.target_segs_per_axis = segs;
        self
    }

    pub fn with_preserve_order(mut self, on: bool) -> Self {
        self.preserve_order = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.error_bound > 0.0 && self.error_bound.is_finite()) {
            return Err(GpzError::domain(format!("error bound must be positive and finite, got {}", self.error_bound)));
        }
        if self.block_size == 0 || !self.block_size.is_multiple_of(LANE_WIDTH) {
            return Err(GpzError::domain(format!(
                "block size must be a positive multiple of {LANE_WIDTH}, got {}",
                self.block_size
            )));
        }
        if self.block_size > u32::MAX as usize {
            return Err(GpzError::overflow("block size exceeds u32"));
        }
        if !self.target_segs_per_axis.is_power_of_two() {
            return Err(GpzError::domain(format!(
                "segments per axis must be a power of two, got {}",
                self.target_segs_per_axis
            )));
        }
        Ok(())
    }
}

/// Resolves the configured bound to an absolute one for this dataset.
pub fn resolve_absolute_bound<T: Coordinate>(ds: &Dataset<T>, cfg: &CompressConfig) -> Result<f64> {
    cfg.validate()?;
    match cfg.eb_mode {
        EbMode::Absolute => Ok(cfg.error_bound),
        EbMode::RangeRelative => {
            let (lo, hi) =
                ds.joint_range().ok_or_else(|| GpzError::domain("range-relative bound on an empty dataset"))?;
            let range = hi.widen() - lo.widen();
            let eb = if range > 0.0 { cfg.error_bound * range } else { cfg.error_bound };
            if !(eb > 0.0 && eb.is_finite()) {
                return Err(GpzError::domain(format!("resolved bound {eb} is not usable")));
            }
            Ok(eb)
        }
    }
}

/// Quantization geometry of one axis of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGeometry {
    pub min: f64,
    pub max: f64,
    /// Bin width, just under 2·eb.
    pub width: f64,
    /// Q: number of bins covering [min, max].
    pub bin_count: u64,
    /// log2 of the segment size m.
    pub offset_bits: u8,
    /// N = ceil(Q / m).
    pub seg_count: u64,
}

impl AxisGeometry {
    pub fn seg_size(&self) -> u64 {
        1u64 << self.offset_bits
    }

    pub fn offset_mask(&self) -> u64 {
        self.seg_size() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGeometry {
    pub axes: Vec<AxisGeometry>,
}

impl BlockGeometry {
    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    /// Π N_a; every linear segment ID is below this.
    pub fn total_segments(&self) -> u64 {
        self.axes.iter().map(|g| g.seg_count).product()
    }

    /// Σ log2 m_a; every linear offset fits in this many bits.
    pub fn total_offset_bits(&self) -> u32 {
        self.axes.iter().map(|g| g.offset_bits as u32).sum()
    }
}

/// One particle's linearized code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Code {
    pub seg_id: u64,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    pub geometry: BlockGeometry,
    pub codes: Vec<Code>,
    /// Original intra-block index of each code, kept when order is preserved.
    pub ranks: Option<Vec<u32>>,
}

impl QuantizedBlock {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_bound_uses_joint_range() {
        let ds = Dataset::new(vec![vec![0.0f64, 4.0], vec![2.0, 10.0]]).unwrap();
        let eb = resolve_absolute_bound(&ds, &CompressConfig::relative(1e-2)).unwrap();
        assert!((eb - 0.1).abs() < 1e-15);
    }

    #[test]
    fn absolute_bound_is_identity() {
        let ds = Dataset::new(vec![vec![1.0f32, 7.0]]).unwrap();
        assert_eq!(resolve_absolute_bound(&ds, &CompressConfig::absolute(0.5)).unwrap(), 0.5);
        let empty = Dataset::<f32>::empty(2).unwrap();
        assert_eq!(resolve_absolute_bound(&empty, &CompressConfig::absolute(0.5)).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_range_falls_back_to_unit_range() {
        let ds = Dataset::new(vec![vec![3.0f64; 5], vec![3.0; 5]]).unwrap();
        assert_eq!(resolve_absolute_bound(&ds, &CompressConfig::relative(1e-3)).unwrap(), 1e-3);
    }

    #[test]
    fn relative_bound_on_empty_dataset_fails() {
        let ds = Dataset::<f64>::empty(3).unwrap();
        let err = resolve_absolute_bound(&ds, &CompressConfig::relative(1e-3)).unwrap_err();
        assert!(matches!(err, GpzError::Domain { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(CompressConfig::absolute(0.0).validate().is_err());
        assert!(CompressConfig::absolute(-1.0).validate().is_err());
        assert!(CompressConfig::absolute(f64::NAN).validate().is_err());
        assert!(CompressConfig::absolute(1.0).with_block_size(100).validate().is_err());
        assert!(CompressConfig::absolute(1.0).with_block_size(0).validate().is_err());
        assert!(CompressConfig::absolute(1.0).with_segs_per_axis(12).validate().is_err());
        assert!(CompressConfig::absolute(1.0).with_block_size(64).validate().is_ok());
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(Dataset::new(vec![vec![1.0f64], vec![]]).is_err());
        assert!(Dataset::new(vec![vec![f64::NAN]]).is_err());
        assert!(Dataset::new(vec![vec![f32::INFINITY]]).is_err());
        assert!(Dataset::<f64>::new(vec![]).is_err());
        assert!(Dataset::<f64>::new(vec![vec![]; 4]).is_err());
    }

    #[test]
    fn interleaved_matches_per_axis() {
        let inter = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ds = Dataset::from_interleaved(&inter, 3).unwrap();
        assert_eq!(ds.axis(0), &[1.0, 4.0]);
        assert_eq!(ds.axis(2), &[3.0, 6.0]);
        assert!(Dataset::from_interleaved(&inter[..5], 3).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn relative_bound_is_scale_covariant(
            xs in prop::collection::vec(-1e3f64..1e3, 2..40),
            s in 0.01f64..100.0,
        ) {
            let ds = Dataset::new(vec![xs.clone()]).unwrap();
            let scaled = Dataset::new(vec![xs.iter().map(|v| v * s).collect()]).unwrap();
            let cfg = CompressConfig::relative(1e-3);
            let a = resolve_absolute_bound(&ds, &cfg).unwrap();
            let b = resolve_absolute_bound(&scaled, &cfg).unwrap();
            prop_assert!(a > 0.0 && b > 0.0);
            let (lo, hi) = ds.joint_range().unwrap();
            if hi > lo {
                prop_assert!((b - a * s).abs() <= 1e-9 * b.abs());
            }
        }
    }
}
