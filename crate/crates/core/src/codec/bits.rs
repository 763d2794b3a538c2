//! Per-parameter bit allocation for coded mixture models.

use crate::geometry::Channel;

/// Coded parameters of one expert, in stream order. U/V use the first ten.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    MuX,
    MuY,
    MuZ,
    MuW,
    U11,
    U12,
    U13,
    U22,
    U23,
    U33,
    SigmaXW,
    SigmaYW,
    SigmaZW,
    Alpha,
}

impl Param {
    pub const LUMA: [Param; 14] = [
        Param::MuX,
        Param::MuY,
        Param::MuZ,
        Param::MuW,
        Param::U11,
        Param::U12,
        Param::U13,
        Param::U22,
        Param::U23,
        Param::U33,
        Param::SigmaXW,
        Param::SigmaYW,
        Param::SigmaZW,
        Param::Alpha,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Bit widths for one channel at one lambda.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitTable {
    pub nm_bits: u32,
    /// Widths for multi-expert blocks, one per header parameter.
    pub multi: Vec<(Param, u32)>,
    /// Widths for single-expert blocks.
    pub single: Vec<(Param, u32)>,
}

impl BitTable {
    pub fn per_model_bits(&self) -> u64 {
        self.multi.iter().map(|(_, b)| *b as u64).sum()
    }

    pub fn single_bits(&self) -> u64 {
        self.single.iter().map(|(_, b)| *b as u64).sum()
    }

    pub fn max_models(&self) -> usize {
        1 << self.nm_bits
    }

    /// Header parameters: every parameter that can appear in the payload.
    pub fn header_params(&self) -> Vec<Param> {
        self.multi.iter().map(|(p, _)| *p).collect()
    }

    pub fn multi_width(&self, p: Param) -> u32 {
        self.multi.iter().find(|(q, _)| *q == p).map(|(_, b)| *b).unwrap_or(0)
    }

    /// Pre-entropy-coding bits of a block with `k` experts.
    pub fn block_bits(&self, k: usize) -> u64 {
        self.nm_bits as u64
            + if k == 1 {
                self.single_bits()
            } else {
                k as u64 * self.per_model_bits()
            }
    }
}

/// `mu_Z` gets one bit less at high lambda.
pub fn mu_z_bits(lambda: f64) -> u32 {
    if lambda >= 300.0 {
        4
    } else {
        5
    }
}

pub fn bit_table(channel: Channel, lambda: f64) -> BitTable {
    bit_table_with_mu_z(channel, mu_z_bits(lambda))
}

pub fn bit_table_with_mu_z(channel: Channel, mu_z: u32) -> BitTable {
    use Param::*;
    if channel.is_luma() {
        BitTable {
            nm_bits: 4,
            multi: vec![
                (MuX, 4),
                (MuY, 4),
                (MuZ, mu_z),
                (MuW, 6),
                (U11, 7),
                (U12, 6),
                (U13, 6),
                (U22, 7),
                (U23, 6),
                (U33, 7),
                (SigmaXW, 6),
                (SigmaYW, 6),
                (SigmaZW, 5),
                (Alpha, 6),
            ],
            single: vec![(MuW, 6), (SigmaXW, 6), (SigmaYW, 6), (SigmaZW, 5)],
        }
    } else {
        BitTable {
            nm_bits: 3,
            multi: vec![
                (MuX, 4),
                (MuY, 4),
                (MuZ, mu_z),
                (MuW, 5),
                (U11, 4),
                (U12, 3),
                (U13, 3),
                (U22, 4),
                (U23, 3),
                (U33, 4),
            ],
            single: vec![(MuW, 5)],
        }
    }
}

/// Bits charged for a candidate with `k` experts.
pub fn candidate_bits(channel: Channel, lambda: f64, k: usize) -> u64 {
    bit_table(channel, lambda).block_bits(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_widths() {
        let t = bit_table(Channel::Y, 1000.0);
        assert_eq!(t.per_model_bits(), 80);
        assert_eq!(t.per_model_bits() - 6, 74);
        assert_eq!(bit_table(Channel::Y, 150.0).per_model_bits(), 81);
        assert_eq!(t.block_bits(1), 4 + 6 + 6 + 6 + 5);
        assert_eq!(t.max_models(), 16);
    }

    #[test]
    fn chroma_widths() {
        let t = bit_table(Channel::U, 1000.0);
        assert_eq!(t.nm_bits, 3);
        assert_eq!(t.single_bits(), 5);
        assert_eq!(t.max_models(), 8);
        assert_eq!(t.header_params().len(), 10);
        assert_eq!(bit_table(Channel::Y, 0.0).header_params().len(), 14);
        assert_eq!(candidate_bits(Channel::V, 75.0, 3), 3 + 3 * t.per_model_bits() + 3);
    }
}
