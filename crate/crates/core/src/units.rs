//! Integer time and byte-size units.
//!
//! Virtual time is accounted in whole picoseconds so per-byte cost rates
//! below one nanosecond stay exact. Serialized formats carry whole
//! nanoseconds (or nanosecond-resolution decimal seconds); the extra
//! picosecond resolution exists only for in-memory arithmetic.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Sub};
use std::time::Duration;

use crate::error::{Error, Result};

const PS_PER_NS: u64 = 1_000;
const PS_PER_SEC: u64 = 1_000_000_000_000;
const NS_PER_SEC: u64 = 1_000_000_000;

/// A non-negative virtual duration in whole picoseconds.
///
/// Arithmetic saturates at the type bounds instead of wrapping; u64
/// picoseconds cover roughly 213 days, far beyond any simulated epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Picos(u64);

impl Picos {
    pub const ZERO: Picos = Picos(0);
    pub const MAX: Picos = Picos(u64::MAX);

    pub const fn from_picos(ps: u64) -> Self {
        Picos(ps)
    }

    pub const fn from_nanos(ns: u64) -> Self {
        Picos(ns.saturating_mul(PS_PER_NS))
    }

    pub const fn from_micros(us: u64) -> Self {
        Picos(us.saturating_mul(1_000_000))
    }

    pub const fn from_millis(ms: u64) -> Self {
        Picos(ms.saturating_mul(1_000_000_000))
    }

    pub const fn from_secs(s: u64) -> Self {
        Picos(s.saturating_mul(PS_PER_SEC))
    }

    /// Rounds to the nearest picosecond; negative and non-finite inputs
    /// clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !s.is_finite() || s <= 0.0 {
            return Picos::ZERO;
        }
        let ps = s * PS_PER_SEC as f64;
        if ps >= u64::MAX as f64 {
            Picos::MAX
        } else {
            Picos(ps.round() as u64)
        }
    }

    pub const fn as_picos(self) -> u64 {
        self.0
    }

    /// Whole nanoseconds, truncating sub-nanosecond remainder.
    pub const fn as_nanos(self) -> u64 {
        self.0 / PS_PER_NS
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn max(self, other: Self) -> Self {
        Picos(self.0.max(other.0))
    }

    pub fn min(self, other: Self) -> Self {
        Picos(self.0.min(other.0))
    }

    pub fn saturating_sub(self, other: Self) -> Self {
        Picos(self.0.saturating_sub(other.0))
    }

    /// Nanosecond-resolution `Duration`; sub-nanosecond remainder truncates.
    pub fn to_duration(self) -> Duration {
        Duration::from_nanos(self.as_nanos())
    }

    /// Decimal seconds with exactly nine fractional digits, e.g. "0.000123000".
    ///
    /// Nanosecond resolution round-trips exactly through [`Picos::parse_secs`].
    pub fn fmt_secs(self) -> String {
        let ns = self.as_nanos();
        format!("{}.{:09}", ns / NS_PER_SEC, ns % NS_PER_SEC)
    }

    /// Parses decimal seconds with up to nine fractional digits.
    pub fn parse_secs(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("invalid seconds value {s:?}"));
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if frac_part.len() > 9 || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let secs: u64 = int_part.parse().map_err(|_| bad())?;
        let mut frac_ns: u64 = 0;
        if !frac_part.is_empty() {
            frac_ns = frac_part.parse().map_err(|_| bad())?;
            for _ in frac_part.len()..9 {
                frac_ns *= 10;
            }
        }
        let ns = secs
            .checked_mul(NS_PER_SEC)
            .and_then(|v| v.checked_add(frac_ns))
            .ok_or_else(bad)?;
        Ok(Picos::from_nanos(ns))
    }
}

impl Add for Picos {
    type Output = Picos;
    fn add(self, rhs: Picos) -> Picos {
        Picos(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for Picos {
    fn add_assign(&mut self, rhs: Picos) {
        *self = *self + rhs;
    }
}

impl Sub for Picos {
    type Output = Picos;
    fn sub(self, rhs: Picos) -> Picos {
        Picos(self.0.saturating_sub(rhs.0))
    }
}

impl Mul<u64> for Picos {
    type Output = Picos;
    fn mul(self, rhs: u64) -> Picos {
        Picos(self.0.saturating_mul(rhs))
    }
}

impl Div<u64> for Picos {
    type Output = Picos;
    fn div(self, rhs: u64) -> Picos {
        Picos(self.0 / rhs)
    }
}

impl Sum for Picos {
    fn sum<I: Iterator<Item = Picos>>(iter: I) -> Picos {
        iter.fold(Picos::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Picos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.fmt_secs())
    }
}

/// Parses a duration such as "5ms", "0.3us", "100ns", "1.5s" or "250ps".
///
/// The bare string "0" is accepted as zero; any other value needs an explicit
/// unit. Fractions finer than one picosecond round half up.
pub fn parse_duration(s: &str) -> Result<Picos> {
    let s = s.trim();
    if s == "0" {
        return Ok(Picos::ZERO);
    }
    let bad = |msg: &str| Error::Usage(format!("invalid duration {s:?}: {msg}"));
    let units: [(&str, u64); 6] = [
        ("ps", 1),
        ("ns", PS_PER_NS),
        ("us", 1_000_000),
        ("µs", 1_000_000),
        ("ms", 1_000_000_000),
        ("s", PS_PER_SEC),
    ];
    let (num, unit_ps) = units
        .iter()
        .find_map(|(suffix, mult)| s.strip_suffix(suffix).map(|n| (n, *mult)))
        .ok_or_else(|| bad("expected a unit suffix ps, ns, us, ms or s"))?;
    let num = num.trim();
    if num.is_empty() {
        return Err(bad("missing number"));
    }
    let ps = parse_decimal_scaled(num, unit_ps).ok_or_else(|| bad("malformed number"))?;
    Ok(Picos::from_picos(ps))
}

/// Parses a byte size such as "512", "64KiB", "1.5MiB" or "2GiB".
///
/// Suffixes are powers of 1024; a bare integer is plain bytes. Fractional
/// values round half up to a whole byte.
pub fn parse_bytes(s: &str) -> Result<u64> {
    let s = s.trim();
    let bad = |msg: &str| Error::Usage(format!("invalid byte size {s:?}: {msg}"));
    let units: [(&str, u64); 5] = [
        ("KiB", 1 << 10),
        ("MiB", 1 << 20),
        ("GiB", 1 << 30),
        ("TiB", 1 << 40),
        ("B", 1),
    ];
    let (num, mult) = units
        .iter()
        .find_map(|(suffix, mult)| s.strip_suffix(suffix).map(|n| (n, *mult)))
        .unwrap_or((s, 1));
    let num = num.trim();
    if num.is_empty() {
        return Err(bad("missing number"));
    }
    if mult == 1 && num.contains('.') {
        return Err(bad("fractional plain bytes are not allowed"));
    }
    parse_decimal_scaled(num, mult).ok_or_else(|| bad("malformed number"))
}

/// Evaluates `num * scale` where `num` is a non-negative decimal literal,
/// rounding half up, saturating at `u64::MAX`. Returns `None` on syntax
/// errors.
fn parse_decimal_scaled(num: &str, scale: u64) -> Option<u64> {
    let (int_part, frac_part) = match num.split_once('.') {
        Some((i, f)) => (i, f),
        None => (num, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    if frac_part.len() > 18 {
        return None;
    }
    let int_val: u128 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let frac_val: u128 = if frac_part.is_empty() { 0 } else { frac_part.parse().ok()? };
    let denom: u128 = 10u128.pow(frac_part.len() as u32);
    let total = int_val
        .checked_mul(scale as u128)?
        .checked_add((frac_val * scale as u128 + denom / 2) / denom)?;
    Some(u64::try_from(total).unwrap_or(u64::MAX))
}
