use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T, E = GpzError> = std::result::Result<T, E>;

/// Location of a failure inside the compressed stream or the input dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Location {
    pub block: Option<usize>,
    pub byte: Option<u64>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.block, self.byte) {
            (None, None) => Ok(()),
            (Some(b), None) => write!(f, " (block {b})"),
            (None, Some(p)) => write!(f, " (byte {p})"),
            (Some(b), Some(p)) => write!(f, " (block {b}, byte {p})"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GpzError {
    /// Input violates a precondition (empty block, non-finite value, bad config).
    #[error("domain error: {msg}{at}")]
    Domain { msg: String, at: Location },

    /// A code or geometry does not fit the integer widths of the format.
    #[error("width overflow: {msg}{at}")]
    WidthOverflow { msg: String, at: Location },

    /// Compressed bytes are malformed.
    #[error("corrupt data: {msg}{at}")]
    CorruptData { msg: String, at: Location },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GpzError {
    pub fn domain(msg: impl Into<String>) -> Self {
        GpzError::Domain { msg: msg.into(), at: Location::default() }
    }

    pub fn overflow(msg: impl Into<String>) -> Self {
        GpzError::WidthOverflow { msg: msg.into(), at: Location::default() }
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        GpzError::CorruptData { msg: msg.into(), at: Location::default() }
    }

    pub fn corrupt_at(msg: impl Into<String>, byte: u64) -> Self {
        GpzError::CorruptData { msg: msg.into(), at: Location { block: None, byte: Some(byte) } }
    }

    fn location_mut(&mut self) -> Option<&mut Location> {
        match self {
            GpzError::Domain { at, .. } | GpzError::WidthOverflow { at, .. } | GpzError::CorruptData { at, .. } => {
                Some(at)
            }
            GpzError::Io(_) => None,
        }
    }

    /// Tags the error with the index of the block it came from.
    pub fn in_block(mut self, block: usize) -> Self {
        if let Some(at) = self.location_mut() {
            at.block = Some(block);
        }
        self
    }

    /// Shifts a byte position recorded relative to a sub-slice.
    pub fn shifted(mut self, base: u64) -> Self {
        if let Some(at) = self.location_mut() {
            at.byte = Some(base + at.byte.unwrap_or(0));
        }
        self
    }

    pub fn block(&self) -> Option<usize> {
        match self {
            GpzError::Domain { at, .. } | GpzError::WidthOverflow { at, .. } | GpzError::CorruptData { at, .. } => {
                at.block
            }
            GpzError::Io(_) => None,
        }
    }

    pub fn is_corrupt(&self) -> bool {
        matches!(self, GpzError::CorruptData { .. })
    }
}
