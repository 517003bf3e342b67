//! Data representations: rolling mean/standard-deviation pairs and SAX words
//! over overlapping subsequences.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{normal_quantile, Scalar};

/// Largest supported SAX alphabet; symbols print as `a..z`.
pub const MAX_ALPHABET: usize = 26;

/// Symbolic word; each byte is a 0-based symbol index.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SaxWord(pub Vec<u8>);

impl SaxWord {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for SaxWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            write!(f, "{}", (b'a' + s) as char)?;
        }
        Ok(())
    }
}

impl fmt::Debug for SaxWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SaxWord(\"{self}\")")
    }
}

/// Transformed observation `x_t`.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureVector<F> {
    Numeric(Vec<F>),
    Symbolic(SaxWord),
}

impl<F: Scalar> FeatureVector<F> {
    pub fn as_numeric(&self) -> Option<&[F]> {
        match self {
            FeatureVector::Numeric(v) => Some(v),
            FeatureVector::Symbolic(_) => None,
        }
    }

    pub fn as_symbolic(&self) -> Option<&SaxWord> {
        match self {
            FeatureVector::Symbolic(w) => Some(w),
            FeatureVector::Numeric(_) => None,
        }
    }
}

/// FIFO buffer of the last `capacity` raw observations.
#[derive(Clone, Debug)]
pub struct RollingWindow<F> {
    capacity: usize,
    buffer: VecDeque<F>,
}

impl<F: Scalar> RollingWindow<F> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("representation.window", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        })
    }

    /// Build a window holding `values`; its capacity is `values.len()`.
    pub fn from_values(values: &[F]) -> Result<Self> {
        let mut w = Self::new(values.len())?;
        for &v in values {
            w.push(v);
        }
        Ok(w)
    }

    /// Push a value, returning the evicted one when the window was full.
    pub fn push(&mut self, value: F) -> Option<F> {
        let evicted = if self.buffer.len() == self.capacity {
            self.buffer.pop_front()
        } else {
            None
        };
        self.buffer.push_back(value);
        evicted
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = F> + '_ {
        self.buffer.iter().copied()
    }
}

/// Mean and population standard deviation of a full window. `None` until warm.
pub fn meanstd_transform<F: Scalar>(window: &RollingWindow<F>) -> Option<FeatureVector<F>> {
    if !window.is_full() {
        return None;
    }
    let n = F::of(window.len() as f64);
    let mean = window.values().sum::<F>() / n;
    let var = window
        .values()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum::<F>()
        / n;
    Some(FeatureVector::Numeric(vec![mean, var.sqrt()]))
}

/// The `alphabet - 1` standard-normal quantiles at `i / alphabet`.
///
/// Exactly symmetric about zero; the middle breakpoint of an even alphabet is
/// exactly `0`.
pub fn breakpoints<F: Scalar>(alphabet: usize) -> Result<Vec<F>> {
    if alphabet < 2 {
        return Err(Error::config("representation.alphabet", "must be at least 2"));
    }
    if alphabet > MAX_ALPHABET {
        return Err(Error::config(
            "representation.alphabet",
            format!("must be at most {MAX_ALPHABET}"),
        ));
    }
    let mut out = vec![0.0f64; alphabet - 1];
    for i in 1..alphabet {
        if 2 * i < alphabet {
            let q = normal_quantile(i as f64 / alphabet as f64);
            out[i - 1] = q;
            out[alphabet - i - 1] = -q;
        } else if 2 * i == alphabet {
            out[i - 1] = 0.0;
        }
    }
    Ok(out.into_iter().map(F::of).collect())
}

/// Symbol assigned to every segment of a zero-variance subsequence.
pub fn middle_symbol(alphabet: usize) -> u8 {
    ((alphabet + 1) / 2 - 1) as u8
}

/// SAX word of `values` using precomputed `breakpoints`.
pub fn sax_word<F: Scalar>(values: &[F], segments: usize, breakpoints: &[F]) -> SaxWord {
    let n = values.len();
    let alphabet = breakpoints.len() + 1;
    let nf = F::of(n as f64);
    let mean = values.iter().copied().sum::<F>() / nf;
    let var = values
        .iter()
        .map(|&v| {
            let d = v - mean;
            d * d
        })
        .sum::<F>()
        / nf;
    let std = var.sqrt();
    let scale = mean.abs().max(F::one());
    if std <= F::of(64.0) * F::epsilon() * scale {
        return SaxWord(vec![middle_symbol(alphabet); segments]);
    }
    let seg_len = n / segments;
    let symbols = values
        .chunks(seg_len)
        .take(segments)
        .map(|chunk| {
            let paa = chunk.iter().map(|&v| (v - mean) / std).sum::<F>() / F::of(chunk.len() as f64);
            symbol_for(paa, breakpoints)
        })
        .collect();
    SaxWord(symbols)
}

/// Index of the region containing `value`; a value equal to a breakpoint
/// belongs to the region above it.
#[inline]
pub fn symbol_for<F: Scalar>(value: F, breakpoints: &[F]) -> u8 {
    breakpoints.partition_point(|&b| b <= value) as u8
}

/// SAX word of a full window. `None` until warm.
pub fn sax_transform<F: Scalar>(
    window: &RollingWindow<F>,
    segments: usize,
    alphabet: usize,
) -> Result<Option<FeatureVector<F>>> {
    check_segments(window.capacity(), segments)?;
    let bps = breakpoints::<F>(alphabet)?;
    if !window.is_full() {
        return Ok(None);
    }
    let values: Vec<F> = window.values().collect();
    Ok(Some(FeatureVector::Symbolic(sax_word(&values, segments, &bps))))
}

fn check_segments(window: usize, segments: usize) -> Result<()> {
    if segments == 0 {
        return Err(Error::config("representation.segments", "must be at least 1"));
    }
    if window % segments != 0 {
        return Err(Error::config(
            "representation.segments",
            format!("window length {window} is not divisible by {segments} segments"),
        ));
    }
    Ok(())
}

/// Which representation a detector uses, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RepresentationConfig {
    /// `(mean, std)` of the last `window` observations.
    MeanStd { window: usize },
    /// SAX word of the last `window` observations.
    Sax {
        window: usize,
        segments: usize,
        alphabet: usize,
    },
}

impl RepresentationConfig {
    pub fn window(&self) -> usize {
        match *self {
            RepresentationConfig::MeanStd { window } | RepresentationConfig::Sax { window, .. } => {
                window
            }
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, RepresentationConfig::Sax { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RepresentationConfig::MeanStd { window } => {
                if window == 0 {
                    return Err(Error::config("representation.window", "must be at least 1"));
                }
            }
            RepresentationConfig::Sax {
                window,
                segments,
                alphabet,
            } => {
                if window == 0 {
                    return Err(Error::config("representation.window", "must be at least 1"));
                }
                check_segments(window, segments)?;
                breakpoints::<f64>(alphabet)?;
            }
        }
        Ok(())
    }
}

/// Stateful streaming transform `s_t -> x_t`.
#[derive(Clone, Debug)]
pub struct Representation<F> {
    config: RepresentationConfig,
    window: RollingWindow<F>,
    breakpoints: Vec<F>,
    scratch: Vec<F>,
}

impl<F: Scalar> Representation<F> {
    pub fn new(config: RepresentationConfig) -> Result<Self> {
        config.validate()?;
        let breakpoints = match config {
            RepresentationConfig::Sax { alphabet, .. } => breakpoints(alphabet)?,
            RepresentationConfig::MeanStd { .. } => Vec::new(),
        };
        Ok(Self {
            window: RollingWindow::new(config.window())?,
            scratch: Vec::with_capacity(config.window()),
            config,
            breakpoints,
        })
    }

    /// Consume one raw value; yields a feature once the buffer is full.
    pub fn push(&mut self, value: F) -> Option<FeatureVector<F>> {
        self.window.push(value);
        match self.config {
            RepresentationConfig::MeanStd { .. } => meanstd_transform(&self.window),
            RepresentationConfig::Sax { segments, .. } => {
                if !self.window.is_full() {
                    return None;
                }
                self.scratch.clear();
                self.scratch.extend(self.window.values());
                Some(FeatureVector::Symbolic(sax_word(
                    &self.scratch,
                    segments,
                    &self.breakpoints,
                )))
            }
        }
    }

    pub fn config(&self) -> &RepresentationConfig {
        &self.config
    }

    pub fn buffered(&self) -> usize {
        self.window.len()
    }
}
