//! Software bfloat16.
//!
//! A [`Bf16`] is the high half of an IEEE-754 binary32 value: 1 sign bit,
//! 8 exponent bits, 7 mantissa bits. The default conversion truncates the
//! low 16 bits; round-to-nearest-even is available for comparison.

use core::fmt;
use core::str::FromStr;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
#[repr(transparent)]
pub struct Bf16(u16);

/// FP32 to BF16 rounding rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Rounding {
    #[default]
    Truncate,
    NearestEven,
}

impl Bf16 {
    pub const ZERO: Bf16 = Bf16(0x0000);
    pub const ONE: Bf16 = Bf16(0x3F80);

    pub const fn from_bits(bits: u16) -> Self {
        Bf16(bits)
    }

    pub const fn to_bits(self) -> u16 {
        self.0
    }

    /// Keep the top 16 bits. A NaN whose surviving mantissa bits are all
    /// zero would read back as infinity, so it gets a quiet bit instead.
    #[inline]
    pub fn from_f32(x: f32) -> Self {
        let bits = x.to_bits();
        let hi = (bits >> 16) as u16;
        if x.is_nan() && hi & 0x007F == 0 {
            return Bf16(hi | 0x0040);
        }
        Bf16(hi)
    }

    #[inline]
    pub fn from_f32_nearest_even(x: f32) -> Self {
        let bits = x.to_bits();
        if x.is_nan() {
            return Bf16(((bits >> 16) as u16) | 0x0040);
        }
        let lsb = (bits >> 16) & 1;
        Bf16((bits.wrapping_add(0x7FFF + lsb) >> 16) as u16)
    }

    #[inline]
    pub fn from_f32_with(x: f32, rounding: Rounding) -> Self {
        match rounding {
            Rounding::Truncate => Self::from_f32(x),
            Rounding::NearestEven => Self::from_f32_nearest_even(x),
        }
    }

    #[inline]
    pub fn to_f32(self) -> f32 {
        f32::from_bits((self.0 as u32) << 16)
    }

    pub fn is_nan(self) -> bool {
        self.0 & 0x7F80 == 0x7F80 && self.0 & 0x007F != 0
    }
}

impl From<Bf16> for f32 {
    fn from(b: Bf16) -> f32 {
        b.to_f32()
    }
}

impl fmt::Debug for Bf16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bf16({:#06x} = {})", self.0, self.to_f32())
    }
}

impl fmt::Display for Bf16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f32(), f)
    }
}

/// `x` as it would read back after a trip through BF16 storage.
#[inline]
pub fn round_trip(x: f32, rounding: Rounding) -> f32 {
    Bf16::from_f32_with(x, rounding).to_f32()
}

pub fn quantize_slice(xs: &mut [f32], rounding: Rounding) {
    for x in xs {
        *x = round_trip(*x, rounding);
    }
}

/// Which tensors go through BF16 during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum QuantMode {
    /// Weights are stored in BF16 and activations are quantized.
    WeightsAndActivations,
    /// Activations are quantized; weights and optimizer state stay FP32.
    ActivationsOnly,
    #[default]
    None,
}

impl QuantMode {
    pub const ALL: [QuantMode; 3] = [
        QuantMode::None,
        QuantMode::ActivationsOnly,
        QuantMode::WeightsAndActivations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuantMode::WeightsAndActivations => "both",
            QuantMode::ActivationsOnly => "activations",
            QuantMode::None => "none",
        }
    }
}

impl fmt::Display for QuantMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownQuantMode;

impl fmt::Display for UnknownQuantMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of: both, activations, none")
    }
}

impl FromStr for QuantMode {
    type Err = UnknownQuantMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(QuantMode::WeightsAndActivations),
            "activations" => Ok(QuantMode::ActivationsOnly),
            "none" => Ok(QuantMode::None),
            _ => Err(UnknownQuantMode),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum WeightStorage {
    #[default]
    F32,
    Bf16,
}

/// Storage decisions derived from a [`QuantMode`]; fixed before training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StoragePolicy {
    pub mode: QuantMode,
    pub weights: WeightStorage,
    pub quantize_activations: bool,
    pub rounding: Rounding,
}

pub fn apply_mode(mode: QuantMode, rounding: Rounding) -> StoragePolicy {
    let (weights, quantize_activations) = match mode {
        QuantMode::WeightsAndActivations => (WeightStorage::Bf16, true),
        QuantMode::ActivationsOnly => (WeightStorage::F32, true),
        QuantMode::None => (WeightStorage::F32, false),
    };
    StoragePolicy {
        mode,
        weights,
        quantize_activations,
        rounding,
    }
}
