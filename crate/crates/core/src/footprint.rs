//! Permission footprints: per-byte fractional shares with a partial join.
//!
//! A share of 0 grants nothing, any share strictly between 0 and 1 grants
//! loads, and the full share 1 grants loads and stores. Two footprints join
//! when no address would end up holding more than the full share.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use num_traits::CheckedAdd;
use thiserror::Error;

use crate::values::{BlockId, Chunk, Value};

/// A byte address: block and signed offset.
pub type Addr = (BlockId, i64);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Share(Ratio<u64>);

impl Share {
    pub const ZERO: Share = Share(Ratio::new_raw(0, 1));
    pub const FULL: Share = Share(Ratio::new_raw(1, 1));

    /// `num / den`, provided it lies in `[0, 1]`.
    pub fn new(num: u64, den: u64) -> Option<Share> {
        if den == 0 || num > den {
            return None;
        }
        Some(Share(Ratio::new(num, den)))
    }

    pub fn half(self) -> Share {
        Share(self.0 / 2)
    }

    pub fn is_zero(self) -> bool {
        self == Share::ZERO
    }

    pub fn is_full(self) -> bool {
        self == Share::FULL
    }

    pub fn readable(self) -> bool {
        !self.is_zero()
    }

    pub fn writable(self) -> bool {
        self.is_full()
    }

    /// Sum of two shares, if it does not exceed the full share.
    pub fn join(self, other: Share) -> Option<Share> {
        let sum = self.0.checked_add(&other.0)?;
        (sum <= Ratio::from_integer(1)).then_some(Share(sum))
    }

    pub fn numer(self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(self) -> u64 {
        *self.0.denom()
    }
}

impl fmt::Debug for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Load,
    Store,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FootprintError {
    #[error("cannot revoke {block} offset {offset}: share {share} is not full")]
    NotFull { block: BlockId, offset: i64, share: Share },
}

/// Map from byte addresses to nonzero shares. Absent means share 0.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Footprint {
    perms: Arc<BTreeMap<Addr, Share>>,
}

impl Footprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (Addr, Share)>) -> Self {
        let perms = entries.into_iter().filter(|(_, s)| !s.is_zero()).collect();
        Footprint { perms: Arc::new(perms) }
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn share(&self, addr: Addr) -> Share {
        self.perms.get(&addr).copied().unwrap_or(Share::ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Addr, Share)> + '_ {
        self.perms.iter().map(|(a, s)| (*a, *s))
    }

    pub fn join(&self, other: &Footprint) -> Option<Footprint> {
        if other.is_empty() {
            return Some(self.clone());
        }
        if self.is_empty() {
            return Some(other.clone());
        }
        let mut perms = (*self.perms).clone();
        for (addr, s) in other.iter() {
            let joined = perms.get(&addr).copied().unwrap_or(Share::ZERO).join(s)?;
            perms.insert(addr, joined);
        }
        Some(Footprint { perms: Arc::new(perms) })
    }

    /// Every byte of the `ch`-sized range at `addr` carries a share that
    /// permits `mode`.
    pub fn allows(&self, addr: Value, ch: Chunk, mode: Access) -> bool {
        let Value::Ptr(b, ofs) = addr else {
            return false;
        };
        let start = ofs.signed() as i64;
        (start..start + ch.size() as i64).all(|k| {
            let s = self.share((b, k));
            match mode {
                Access::Load => s.readable(),
                Access::Store => s.writable(),
            }
        })
    }

    /// Join with the share `s` over `[lo, hi)` of block `b`.
    pub fn grant(&self, b: BlockId, lo: i64, hi: i64, s: Share) -> Option<Footprint> {
        if s.is_zero() || lo >= hi {
            return Some(self.clone());
        }
        let mut perms = (*self.perms).clone();
        for k in lo..hi {
            let joined = perms.get(&(b, k)).copied().unwrap_or(Share::ZERO).join(s)?;
            perms.insert((b, k), joined);
        }
        Some(Footprint { perms: Arc::new(perms) })
    }

    /// Remove the full share over `[lo, hi)` of `b`. Fails without change if
    /// any address in the range is not held in full.
    pub fn revoke(&self, b: BlockId, lo: i64, hi: i64) -> Result<Footprint, FootprintError> {
        if lo >= hi {
            return Ok(self.clone());
        }
        for k in lo..hi {
            let share = self.share((b, k));
            if !share.is_full() {
                return Err(FootprintError::NotFull { block: b, offset: k, share });
            }
        }
        let mut perms = (*self.perms).clone();
        for k in lo..hi {
            perms.remove(&(b, k));
        }
        Ok(Footprint { perms: Arc::new(perms) })
    }

    /// The sub-footprint on the given addresses (whole shares).
    pub fn restrict(&self, keep: impl Fn(&Addr) -> bool) -> Footprint {
        Footprint::from_entries(self.iter().filter(|(a, _)| keep(a)))
    }
}

impl fmt::Debug for Footprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.perms.iter().map(|((b, o), s)| (format!("{b}+{o}"), s))).finish()
    }
}
