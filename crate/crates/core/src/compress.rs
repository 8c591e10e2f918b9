//! Reduced-precision storage for moments sketches.
//!
//! The extrema are kept exactly. Each power sum `Σ x^i` is divided by
//! `2^(c + i·a)` and each log sum `Σ ln^i x` by `2^(c + i·b)`, where
//! `2^c >= n` and `a`, `b` are the smallest exponents that bring every scaled
//! sum into `[-1, 1]`. The scaled values are stored as small floats with
//! `exp_bits` exponent bits, gradual underflow below the smallest binade, and
//! unbiased randomized rounding of the significand. Scaling by powers of two
//! is exact, so the only error is the rounding, and it is relative to the
//! natural size of each sum rather than to the sum itself. At 64 bits per
//! value the raw IEEE-754 patterns are stored and decoding is bit-exact.

use rand::Rng;

use crate::error::{Result, SketchError};
use crate::sketch::{read_header, write_header, MomentsSketch, FLAG_COMPRESSED, FLAG_STALE, HEADER_LEN};

pub const MIN_BITS: u8 = 8;
pub const MAX_BITS: u8 = 64;

const MANTISSA_BITS: u32 = 52;
const EXTRA_HEADER: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedSketch {
    order: usize,
    count: u64,
    stale: bool,
    bits_per_value: u8,
    exp_bits: u8,
    power_scale: i16,
    log_scale: i16,
    payload: Vec<u8>,
}

/// `x · 2^k` without intermediate overflow.
fn ldexp(mut x: f64, mut k: i32) -> f64 {
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
    }
    x * 2f64.powi(k)
}

/// Smallest `e` with `|v| <= 2^e`, for finite nonzero `v`.
fn ceil_log2(v: f64) -> i32 {
    let mut e = v.abs().log2().ceil() as i32;
    while ldexp(1.0, e) < v.abs() {
        e += 1;
    }
    while e > -1074 && ldexp(1.0, e - 1) >= v.abs() {
        e -= 1;
    }
    e
}

fn count_exponent(count: u64) -> i32 {
    64 - (count.max(1) - 1).leading_zeros() as i32
}

/// Smallest `a` such that `|sums[i-1]| <= 2^(c + i·a)` for every order `i`.
fn sum_scale(sums: &[f64], c: i32) -> i32 {
    sums.iter()
        .enumerate()
        .filter(|(_, s)| **s != 0.0)
        .map(|(j, s)| {
            let i = j as i32 + 1;
            (ceil_log2(*s) - c).div_euclid(i) + i32::from((ceil_log2(*s) - c).rem_euclid(i) != 0)
        })
        .max()
        .unwrap_or(0)
        .clamp(i16::MIN as i32, i16::MAX as i32)
}

/// Layout of the small float format: `1 + exp_bits + mant_bits` bits with
/// binades `2^0 … 2^emin` and gradual underflow below.
#[derive(Debug, Clone, Copy)]
struct SmallFloat {
    exp_bits: u32,
    mant_bits: u32,
}

impl SmallFloat {
    fn new(bits: u8, exp_bits: u32) -> Self {
        Self {
            exp_bits,
            mant_bits: (bits as u32 - 1 - exp_bits).min(MANTISSA_BITS),
        }
    }

    fn emin(self) -> i32 {
        -((1i32 << self.exp_bits) - 2)
    }

    /// Rounds `v` (with `|v| <= 1`) to the format; returns `(sign, code, mantissa)`.
    fn encode<R: Rng + ?Sized>(self, v: f64, rng: &mut R) -> (u64, u64, u64) {
        let sign = u64::from(v.is_sign_negative());
        let a = v.abs();
        let m = self.mant_bits as i32;
        let emin = self.emin();
        let e = if a == 0.0 { emin } else { (ceil_log2(a) - 1).max(emin) };
        let e = if ldexp(1.0, e + 1) <= a { e + 1 } else { e };
        let scaled = ldexp(a, m - e);
        let floor = scaled.floor();
        let mut k = floor as u64;
        if rng.random::<f64>() < scaled - floor {
            k += 1;
        }
        let top = 1u64 << m;
        if a < ldexp(1.0, emin) {
            // gradual underflow; a carry into the top bit lands on 2^emin
            let code = if k >= top { (1 - emin) as u64 } else { 0 };
            (sign, code, k & (top - 1))
        } else if k >= 2 * top {
            (sign, (1 - e) as u64 - 1, 0)
        } else {
            (sign, (1 - e) as u64, k - top)
        }
    }

    fn decode(self, sign: u64, code: u64, mant: u64) -> f64 {
        let m = self.mant_bits as i32;
        let a = if code == 0 {
            ldexp(mant as f64, self.emin() - m)
        } else {
            let e = 1 - code as i32;
            ldexp(((1u64 << m) + mant) as f64, e - m)
        };
        if sign == 1 {
            -a
        } else {
            a
        }
    }
}

impl CompressedSketch {
    pub fn bits_per_value(&self) -> u8 {
        self.bits_per_value
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Significand bits retained per sum (excluding the implicit bit).
    pub fn significand_bits(&self) -> u32 {
        if self.bits_per_value == MAX_BITS {
            MANTISSA_BITS
        } else {
            SmallFloat::new(self.bits_per_value, self.exp_bits as u32).mant_bits
        }
    }

    /// Encoded size in bytes, header included.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + EXTRA_HEADER + self.payload.len()
    }

    fn payload_len(order: usize, bits: u8) -> usize {
        (2 * 64 + 2 * order * bits as usize).div_ceil(8)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        let flags = FLAG_COMPRESSED | if self.stale { FLAG_STALE } else { 0 };
        write_header(&mut out, flags, self.order, self.count);
        out.push(self.bits_per_value);
        out.push(self.exp_bits);
        out.extend_from_slice(&self.power_scale.to_le_bytes());
        out.extend_from_slice(&self.log_scale.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = read_header(bytes)?;
        if header.flags & FLAG_COMPRESSED == 0 {
            return Err(SketchError::Format("not a compressed sketch".into()));
        }
        let rest = &bytes[HEADER_LEN..];
        if rest.len() < EXTRA_HEADER {
            return Err(SketchError::Format("truncated compression header".into()));
        }
        let bits_per_value = rest[0];
        let exp_bits = rest[1];
        let power_scale = i16::from_le_bytes([rest[2], rest[3]]);
        let log_scale = i16::from_le_bytes([rest[4], rest[5]]);
        check_bits(bits_per_value).map_err(|e| SketchError::Format(e.to_string()))?;
        if bits_per_value < MAX_BITS && (exp_bits == 0 || exp_bits > 11 || exp_bits + 1 >= bits_per_value) {
            return Err(SketchError::Format(format!("bad exponent width {exp_bits}")));
        }
        let expected = Self::payload_len(header.order, bits_per_value);
        let payload = &rest[EXTRA_HEADER..];
        if payload.len() != expected {
            return Err(SketchError::Format(format!(
                "expected {expected} payload bytes, got {}",
                payload.len()
            )));
        }
        Ok(Self {
            order: header.order,
            count: header.count,
            stale: header.flags & FLAG_STALE != 0,
            bits_per_value,
            exp_bits,
            power_scale,
            log_scale,
            payload: payload.to_vec(),
        })
    }

    pub fn decode(&self) -> Result<MomentsSketch> {
        let mut reader = BitReader::new(&self.payload);
        let mut fields = Vec::with_capacity(2 + 2 * self.order);
        fields.push(f64::from_bits(reader.read(64)));
        fields.push(f64::from_bits(reader.read(64)));
        if self.bits_per_value == MAX_BITS {
            for _ in 0..2 * self.order {
                fields.push(f64::from_bits(reader.read(64)));
            }
        } else {
            let fmt = SmallFloat::new(self.bits_per_value, self.exp_bits as u32);
            let c = count_exponent(self.count);
            for scale in [self.power_scale, self.log_scale] {
                for i in 1..=self.order as i32 {
                    let sign = reader.read(1);
                    let code = reader.read(fmt.exp_bits);
                    let mant = reader.read(fmt.mant_bits);
                    let v = fmt.decode(sign, code, mant);
                    fields.push(ldexp(v, c + i * scale as i32));
                }
            }
        }
        Ok(MomentsSketch::from_float_fields(
            self.order, self.count, self.stale, &fields,
        ))
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(SketchError::InvalidParameter(format!(
            "bits per value must be in [{MIN_BITS}, {MAX_BITS}], got {bits}"
        )))
    }
}

/// Exponent width for `bits`: deep enough to reach the smallest scaled value
/// of interest, where anything below `2^-mant_bits` of the scale is noise.
fn choose_exp_bits(bits: u8, deepest: i32) -> u32 {
    let floor = (bits as u32).saturating_sub(1 + MANTISSA_BITS).max(1);
    (floor..=11)
        .find(|&e| {
            let fmt = SmallFloat::new(bits, e);
            -fmt.emin() >= deepest.min(fmt.mant_bits as i32)
        })
        .unwrap_or(11)
        .min(bits as u32 - 2)
}

/// Encodes `sketch` with `bits_per_value` bits per moment sum.
pub fn encode_low_precision<R: Rng + ?Sized>(
    sketch: &MomentsSketch,
    bits_per_value: u8,
    rng: &mut R,
) -> Result<CompressedSketch> {
    check_bits(bits_per_value)?;
    let order = sketch.order();
    let mut writer = BitWriter::default();
    writer.write(sketch.min().to_bits(), 64);
    writer.write(sketch.max().to_bits(), 64);

    let (exp_bits, power_scale, log_scale) = if bits_per_value == MAX_BITS {
        for &v in sketch.power_sums().iter().chain(sketch.log_sums()) {
            writer.write(v.to_bits(), 64);
        }
        (11u32, 0i32, 0i32)
    } else {
        let c = count_exponent(sketch.count());
        let a = sum_scale(sketch.power_sums(), c);
        let b = sum_scale(sketch.log_sums(), c);
        let scaled: Vec<f64> = [(sketch.power_sums(), a), (sketch.log_sums(), b)]
            .iter()
            .flat_map(|&(sums, s)| {
                sums.iter()
                    .enumerate()
                    .map(move |(j, &v)| ldexp(v, -(c + (j as i32 + 1) * s)))
            })
            .collect();
        let deepest = scaled
            .iter()
            .filter(|v| **v != 0.0)
            .map(|v| 1 - ceil_log2(*v))
            .max()
            .unwrap_or(0);
        let exp_bits = choose_exp_bits(bits_per_value, deepest);
        let fmt = SmallFloat::new(bits_per_value, exp_bits);
        for &v in &scaled {
            let (sign, code, mant) = fmt.encode(v.clamp(-1.0, 1.0), rng);
            writer.write(sign, 1);
            writer.write(code, fmt.exp_bits);
            writer.write(mant, fmt.mant_bits);
        }
        (exp_bits, a, b)
    };
    Ok(CompressedSketch {
        order,
        count: sketch.count(),
        stale: sketch.extrema_stale(),
        bits_per_value,
        exp_bits: exp_bits as u8,
        power_scale: power_scale as i16,
        log_scale: log_scale as i16,
        payload: writer.finish(),
    })
}

#[derive(Default)]
struct BitWriter {
    out: Vec<u8>,
    acc: u128,
    n: u32,
}

impl BitWriter {
    fn write(&mut self, value: u64, bits: u32) {
        if bits == 0 {
            return;
        }
        let v = if bits == 64 { value } else { value & ((1u64 << bits) - 1) };
        self.acc |= (v as u128) << self.n;
        self.n += bits;
        while self.n >= 8 {
            self.out.push(self.acc as u8);
            self.acc >>= 8;
            self.n -= 8;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            self.out.push(self.acc as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u128,
    n: u32,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            acc: 0,
            n: 0,
        }
    }

    fn read(&mut self, bits: u32) -> u64 {
        if bits == 0 {
            return 0;
        }
        while self.n < bits {
            let byte = self.bytes.get(self.pos).copied().unwrap_or(0);
            self.acc |= (byte as u128) << self.n;
            self.pos += 1;
            self.n += 8;
        }
        let v = if bits == 64 {
            self.acc as u64
        } else {
            (self.acc as u64) & ((1u64 << bits) - 1)
        };
        self.acc >>= bits;
        self.n -= bits;
        v
    }
}
