//! The moments sketch: min, max, count and the first `k` power sums and
//! log-power sums of a dataset.
//!
//! Sums are kept unscaled (`Σ x^i`, `Σ ln(x)^i`) so that merging is plain
//! element-wise addition. Points with `x <= 0` do not contribute to the log
//! sums; estimators ignore the log sums whenever `min <= 0`.

use std::borrow::Borrow;

use crate::error::{Result, SketchError};

/// Largest supported order. Higher moments carry no usable information in
/// double precision once shifted onto `[-1, 1]`.
pub const MAX_ORDER: usize = 20;

const MAGIC: &[u8; 4] = b"MSK1";
const VERSION: u8 = 1;
pub(crate) const FLAG_STALE: u8 = 0b01;
pub(crate) const FLAG_COMPRESSED: u8 = 0b10;
/// magic + version + flags + order + count
pub(crate) const HEADER_LEN: usize = 4 + 1 + 1 + 2 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentsSketch {
    order: usize,
    count: u64,
    min: f64,
    max: f64,
    power_sums: Vec<f64>,
    log_sums: Vec<f64>,
    extrema_stale: bool,
}

impl MomentsSketch {
    /// Creates an empty sketch tracking moments `1..=order`.
    pub fn new(order: usize) -> Result<Self> {
        check_order(order)?;
        Ok(Self {
            order,
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            power_sums: vec![0.0; order],
            log_sums: vec![0.0; order],
            extrema_stale: false,
        })
    }

    /// Builds a sketch from raw fields, validating shapes and invariants.
    pub fn from_parts(
        count: u64,
        min: f64,
        max: f64,
        power_sums: Vec<f64>,
        log_sums: Vec<f64>,
    ) -> Result<Self> {
        let order = power_sums.len();
        check_order(order)?;
        if log_sums.len() != order {
            return Err(SketchError::InvalidParameter(format!(
                "{} power sums but {} log sums",
                order,
                log_sums.len()
            )));
        }
        if count > 0 && !(min <= max) {
            return Err(SketchError::InvalidParameter(format!(
                "min {min} exceeds max {max}"
            )));
        }
        Ok(Self {
            order,
            count,
            min,
            max,
            power_sums,
            log_sums,
            extrema_stale: false,
        })
    }

    /// Builds a sketch by accumulating every value in `values`.
    pub fn from_values(order: usize, values: &[f64]) -> Result<Self> {
        let mut sketch = Self::new(order)?;
        sketch.accumulate_all(values)?;
        Ok(sketch)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// `power_sums()[i]` holds `Σ x^(i+1)`.
    pub fn power_sums(&self) -> &[f64] {
        &self.power_sums
    }

    /// `log_sums()[i]` holds `Σ_{x>0} ln(x)^(i+1)`.
    pub fn log_sums(&self) -> &[f64] {
        &self.log_sums
    }

    /// True after a subtraction: min/max no longer describe the contents.
    pub fn extrema_stale(&self) -> bool {
        self.extrema_stale
    }

    /// Log sums are meaningful only when every point was strictly positive.
    pub fn has_log_moments(&self) -> bool {
        self.count > 0 && self.min > 0.0 && !self.extrema_stale
    }

    /// Replaces the extrema, clearing the stale mark. Used by windowing code
    /// that tracks extrema per pane.
    pub fn set_extrema(&mut self, min: f64, max: f64) -> Result<()> {
        if self.count > 0 && !(min <= max) {
            return Err(SketchError::InvalidParameter(format!(
                "min {min} exceeds max {max}"
            )));
        }
        if self.count == 0 {
            self.min = f64::INFINITY;
            self.max = f64::NEG_INFINITY;
        } else {
            self.min = min;
            self.max = max;
        }
        self.extrema_stale = false;
        Ok(())
    }

    pub fn accumulate(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(SketchError::InvalidValue(x));
        }
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        self.count += 1;

        let mut p = x;
        for s in self.power_sums.iter_mut() {
            *s += p;
            p *= x;
        }
        if x > 0.0 {
            let l = x.ln();
            let mut p = l;
            for s in self.log_sums.iter_mut() {
                *s += p;
                p *= l;
            }
        }
        Ok(())
    }

    /// Accumulates a batch of values. Either every value is added or, if any
    /// value is non-finite, the sketch is left untouched.
    pub fn accumulate_all(&mut self, values: &[f64]) -> Result<()> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(SketchError::InvalidValue(bad));
        }
        #[cfg(feature = "compensated")]
        {
            self.accumulate_compensated(values);
        }
        #[cfg(not(feature = "compensated"))]
        {
            for &x in values {
                self.accumulate(x)?;
            }
        }
        Ok(())
    }

    #[cfg(feature = "compensated")]
    fn accumulate_compensated(&mut self, values: &[f64]) {
        // Neumaier summation per moment, folded into the running sums at the end.
        let k = self.order;
        let mut sums = vec![0.0; 2 * k];
        let mut comp = vec![0.0; 2 * k];
        let add = |sum: &mut f64, c: &mut f64, v: f64| {
            let t = *sum + v;
            if sum.abs() >= v.abs() {
                *c += (*sum - t) + v;
            } else {
                *c += (v - t) + *sum;
            }
            *sum = t;
        };
        for &x in values {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
            let mut p = x;
            for i in 0..k {
                add(&mut sums[i], &mut comp[i], p);
                p *= x;
            }
            if x > 0.0 {
                let l = x.ln();
                let mut p = l;
                for i in 0..k {
                    add(&mut sums[k + i], &mut comp[k + i], p);
                    p *= l;
                }
            }
        }
        self.count += values.len() as u64;
        for i in 0..k {
            self.power_sums[i] += sums[i] + comp[i];
            self.log_sums[i] += sums[k + i] + comp[k + i];
        }
    }

    /// Merges `other` into `self`.
    pub fn merge(&mut self, other: &MomentsSketch) -> Result<()> {
        if self.order != other.order {
            return Err(SketchError::IncompatibleOrder {
                left: self.order,
                right: other.order,
            });
        }
        self.merge_unchecked(other);
        Ok(())
    }

    #[inline]
    pub(crate) fn merge_unchecked(&mut self, other: &MomentsSketch) {
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.count += other.count;
        self.extrema_stale |= other.extrema_stale;
        for (a, b) in self.power_sums.iter_mut().zip(&other.power_sums) {
            *a += *b;
        }
        for (a, b) in self.log_sums.iter_mut().zip(&other.log_sums) {
            *a += *b;
        }
    }

    /// Returns the merge of `a` and `b` without modifying either.
    pub fn merged(a: &MomentsSketch, b: &MomentsSketch) -> Result<MomentsSketch> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    /// Removes the contribution of `pane` (turnstile deletion).
    ///
    /// Extrema cannot be recovered under deletion, so the result is marked
    /// stale unless it is empty.
    pub fn subtract(&mut self, pane: &MomentsSketch) -> Result<()> {
        if self.order != pane.order {
            return Err(SketchError::IncompatibleOrder {
                left: self.order,
                right: pane.order,
            });
        }
        if pane.count > self.count {
            return Err(SketchError::InvalidSubtraction(format!(
                "pane count {} exceeds window count {}",
                pane.count, self.count
            )));
        }
        self.count -= pane.count;
        for (a, b) in self.power_sums.iter_mut().zip(&pane.power_sums) {
            *a -= *b;
        }
        for (a, b) in self.log_sums.iter_mut().zip(&pane.log_sums) {
            *a -= *b;
        }
        if self.count == 0 {
            self.min = f64::INFINITY;
            self.max = f64::NEG_INFINITY;
            self.power_sums.iter_mut().for_each(|s| *s = 0.0);
            self.log_sums.iter_mut().for_each(|s| *s = 0.0);
            self.extrema_stale = false;
        } else {
            self.extrema_stale = true;
        }
        Ok(())
    }

    /// Number of bytes produced by [`MomentsSketch::to_bytes`].
    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + 16 + 16 * self.order
    }

    /// Little-endian binary encoding:
    /// `"MSK1" | version u8 | flags u8 | order u16 | count u64 | min f64 |
    /// max f64 | power sums f64 x order | log sums f64 x order`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        write_header(&mut out, self.flags(), self.order, self.count);
        out.extend_from_slice(&self.min.to_le_bytes());
        out.extend_from_slice(&self.max.to_le_bytes());
        for v in self.power_sums.iter().chain(&self.log_sums) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = read_header(bytes)?;
        if header.flags & FLAG_COMPRESSED != 0 {
            return Err(SketchError::Format(
                "compressed payload; decode it as a CompressedSketch".into(),
            ));
        }
        let expected = HEADER_LEN + 16 + 16 * header.order;
        if bytes.len() != expected {
            return Err(SketchError::Format(format!(
                "expected {expected} bytes for order {}, got {}",
                header.order,
                bytes.len()
            )));
        }
        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let min = floats.next().unwrap_or_default();
        let max = floats.next().unwrap_or_default();
        let power_sums: Vec<f64> = floats.by_ref().take(header.order).collect();
        let log_sums: Vec<f64> = floats.collect();
        Ok(Self {
            order: header.order,
            count: header.count,
            min,
            max,
            power_sums,
            log_sums,
            extrema_stale: header.flags & FLAG_STALE != 0,
        })
    }

    pub(crate) fn flags(&self) -> u8 {
        if self.extrema_stale {
            FLAG_STALE
        } else {
            0
        }
    }

    /// Raw fields in storage order: min, max, power sums, log sums.
    pub(crate) fn from_float_fields(
        order: usize,
        count: u64,
        stale: bool,
        fields: &[f64],
    ) -> Self {
        debug_assert_eq!(fields.len(), 2 + 2 * order);
        Self {
            order,
            count,
            min: fields[0],
            max: fields[1],
            power_sums: fields[2..2 + order].to_vec(),
            log_sums: fields[2 + order..].to_vec(),
            extrema_stale: stale,
        }
    }
}

fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(SketchError::InvalidParameter(format!(
            "order must be in [1, {MAX_ORDER}], got {order}"
        )))
    }
}

pub(crate) struct Header {
    pub flags: u8,
    pub order: usize,
    pub count: u64,
}

pub(crate) fn write_header(out: &mut Vec<u8>, flags: u8, order: usize, count: u64) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(flags);
    out.extend_from_slice(&(order as u16).to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
}

pub(crate) fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(SketchError::Format(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(SketchError::Format("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(SketchError::Format(format!(
            "unsupported version {}",
            bytes[4]
        )));
    }
    let flags = bytes[5];
    let order = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    check_order(order).map_err(|_| SketchError::Format(format!("bad order {order}")))?;
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    Ok(Header {
        flags,
        order,
        count,
    })
}

/// Merges a slice of sketches sequentially, left to right.
pub fn merge_all<S: Borrow<MomentsSketch>>(order: usize, sketches: &[S]) -> Result<MomentsSketch> {
    let mut acc = MomentsSketch::new(order)?;
    for s in sketches {
        acc.merge(s.borrow())?;
    }
    Ok(acc)
}

/// Merges a slice of sketches on `threads` workers. Each worker folds a
/// contiguous shard; shard results are then combined in shard order, so
/// the result depends only on `threads`, not on scheduling.
pub fn merge_all_parallel<S: Borrow<MomentsSketch> + Sync>(
    order: usize,
    sketches: &[S],
    threads: usize,
) -> Result<MomentsSketch> {
    let threads = threads.max(1);
    if threads == 1 || sketches.len() < 2 * threads {
        return merge_all(order, sketches);
    }
    let chunk = sketches.len().div_ceil(threads);
    let partials: Vec<Result<MomentsSketch>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sketches
            .chunks(chunk)
            .map(|shard| scope.spawn(move || merge_all(order, shard)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("merge worker panicked"))
            .collect()
    });
    let mut acc = MomentsSketch::new(order)?;
    for p in partials {
        acc.merge(&p?)?;
    }
    Ok(acc)
}
