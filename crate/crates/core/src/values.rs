//! Runtime values, 32-bit modular integers and memory chunk descriptors.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A 32-bit machine integer. Arithmetic wraps modulo 2^32; operations that
/// care about signedness say so in their name.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Int32(u32);

impl Int32 {
    pub const ZERO: Int32 = Int32(0);
    pub const ONE: Int32 = Int32(1);

    pub const fn new(bits: u32) -> Self {
        Int32(bits)
    }

    pub const fn from_signed(i: i32) -> Self {
        Int32(i as u32)
    }

    pub const fn unsigned(self) -> u32 {
        self.0
    }

    pub const fn signed(self) -> i32 {
        self.0 as i32
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn add(self, o: Int32) -> Int32 {
        Int32(self.0.wrapping_add(o.0))
    }

    pub fn sub(self, o: Int32) -> Int32 {
        Int32(self.0.wrapping_sub(o.0))
    }

    pub fn mul(self, o: Int32) -> Int32 {
        Int32(self.0.wrapping_mul(o.0))
    }

    pub fn neg(self) -> Int32 {
        Int32(self.0.wrapping_neg())
    }

    pub fn not(self) -> Int32 {
        Int32(!self.0)
    }

    pub fn and(self, o: Int32) -> Int32 {
        Int32(self.0 & o.0)
    }

    pub fn or(self, o: Int32) -> Int32 {
        Int32(self.0 | o.0)
    }

    pub fn xor(self, o: Int32) -> Int32 {
        Int32(self.0 ^ o.0)
    }

    /// Signed division; undefined on a zero divisor and on `MIN / -1`.
    pub fn divs(self, o: Int32) -> Option<Int32> {
        self.signed().checked_div(o.signed()).map(Int32::from_signed)
    }

    pub fn divu(self, o: Int32) -> Option<Int32> {
        self.0.checked_div(o.0).map(Int32)
    }

    pub fn mods(self, o: Int32) -> Option<Int32> {
        self.signed().checked_rem(o.signed()).map(Int32::from_signed)
    }

    pub fn modu(self, o: Int32) -> Option<Int32> {
        self.0.checked_rem(o.0).map(Int32)
    }

    /// Shift amounts are read unsigned and must be below 32.
    pub fn shl(self, amount: Int32) -> Option<Int32> {
        (amount.0 < 32).then(|| Int32(self.0 << amount.0))
    }

    pub fn shrs(self, amount: Int32) -> Option<Int32> {
        (amount.0 < 32).then(|| Int32::from_signed(self.signed() >> amount.0))
    }

    pub fn shru(self, amount: Int32) -> Option<Int32> {
        (amount.0 < 32).then(|| Int32(self.0 >> amount.0))
    }

    /// Keep the low `bits` bits and sign-extend from bit `bits - 1`.
    pub fn sign_ext(self, bits: u32) -> Int32 {
        debug_assert!((1..=32).contains(&bits));
        let shift = 32 - bits;
        Int32::from_signed((self.signed() << shift) >> shift)
    }

    /// Keep the low `bits` bits.
    pub fn zero_ext(self, bits: u32) -> Int32 {
        debug_assert!((1..=32).contains(&bits));
        if bits == 32 {
            self
        } else {
            Int32(self.0 & ((1u32 << bits) - 1))
        }
    }
}

impl fmt::Debug for Int32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.signed())
    }
}

impl fmt::Display for Int32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.signed())
    }
}

impl From<i32> for Int32 {
    fn from(i: i32) -> Self {
        Int32::from_signed(i)
    }
}

/// Abstract block number. Fresh blocks get strictly increasing ids.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct BlockId(pub u32);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// A Cminor value. There is no null constructor: null is `Int(0)`.
///
/// Equality on floats is bitwise, so `Float(NaN) == Float(NaN)` for the
/// same payload and `Float(0.0) != Float(-0.0)`. This is structural
/// equality on the value domain, not the language's float comparison.
#[derive(Clone, Copy, Serialize, Deserialize)]
pub enum Value {
    Undef,
    Int(Int32),
    Ptr(BlockId, Int32),
    Float(f64),
}

impl Value {
    pub fn int(i: i32) -> Value {
        Value::Int(Int32::from_signed(i))
    }

    pub fn ptr(b: BlockId, ofs: i32) -> Value {
        Value::Ptr(b, Int32::from_signed(ofs))
    }

    /// A pointer or a nonzero integer.
    pub fn is_true(&self) -> bool {
        match self {
            Value::Ptr(..) => true,
            Value::Int(i) => !i.is_zero(),
            Value::Undef | Value::Float(_) => false,
        }
    }

    /// Only the integer zero. Not the complement of [`Value::is_true`].
    pub fn is_false(&self) -> bool {
        matches!(self, Value::Int(i) if i.is_zero())
    }

    pub fn is_defined(&self) -> bool {
        !matches!(self, Value::Undef)
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Undef, Value::Undef) => true,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Ptr(b1, o1), Value::Ptr(b2, o2)) => b1 == b2 && o1 == o2,
            (Value::Float(x), Value::Float(y)) => x.to_bits() == y.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Undef => {}
            Value::Int(i) => i.hash(state),
            Value::Ptr(b, o) => {
                b.hash(state);
                o.hash(state);
            }
            Value::Float(x) => x.to_bits().hash(state),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Undef => write!(f, "undef"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Ptr(b, o) => write!(f, "ptr({}, {})", b.0, o),
            Value::Float(x) => write!(f, "{}", format_float(*x)),
        }
    }
}

/// Float literal text that reads back to the same bits (NaN payloads aside).
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        let s = format!("{x:?}");
        if s.contains(['.', 'e', 'E']) {
            s
        } else {
            format!("{s}.0")
        }
    }
}

/// Memory access descriptor: width, signedness, int or float.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Chunk {
    Int8Signed,
    Int8Unsigned,
    Int16Signed,
    Int16Unsigned,
    Int32,
    Float32,
    Float64,
}

impl Chunk {
    pub const ALL: [Chunk; 7] = [
        Chunk::Int8Signed,
        Chunk::Int8Unsigned,
        Chunk::Int16Signed,
        Chunk::Int16Unsigned,
        Chunk::Int32,
        Chunk::Float32,
        Chunk::Float64,
    ];

    /// Width in bytes.
    pub fn size(self) -> u32 {
        match self {
            Chunk::Int8Signed | Chunk::Int8Unsigned => 1,
            Chunk::Int16Signed | Chunk::Int16Unsigned => 2,
            Chunk::Int32 | Chunk::Float32 => 4,
            Chunk::Float64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Chunk::Int8Signed => "i8s",
            Chunk::Int8Unsigned => "i8u",
            Chunk::Int16Signed => "i16s",
            Chunk::Int16Unsigned => "i16u",
            Chunk::Int32 => "i32",
            Chunk::Float32 => "f32",
            Chunk::Float64 => "f64",
        }
    }

    /// The value that a store of `v` with this chunk leaves behind, already
    /// in the form a load with the same chunk returns: small integers are
    /// truncated and re-extended, `f32` narrows, and a value of the wrong
    /// kind for the chunk becomes `Undef`.
    pub fn normalize(self, v: Value) -> Value {
        match (self, v) {
            (Chunk::Int8Signed, Value::Int(i)) => Value::Int(i.sign_ext(8)),
            (Chunk::Int8Unsigned, Value::Int(i)) => Value::Int(i.zero_ext(8)),
            (Chunk::Int16Signed, Value::Int(i)) => Value::Int(i.sign_ext(16)),
            (Chunk::Int16Unsigned, Value::Int(i)) => Value::Int(i.zero_ext(16)),
            (Chunk::Int32, v @ (Value::Int(_) | Value::Ptr(..))) => v,
            (Chunk::Float32, Value::Float(x)) => Value::Float(x as f32 as f64),
            (Chunk::Float64, v @ Value::Float(_)) => v,
            _ => Value::Undef,
        }
    }
}

impl fmt::Display for Chunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Chunk {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Chunk::ALL.into_iter().find(|c| c.name() == s).ok_or(())
    }
}
