//! Adaptive order-0 arithmetic coding with one frequency model per
//! alphabet size.
//!
//! The coder is the classic 32-bit integer range coder with pending
//! (underflow) bits. Counts start at 1 and are halved once their total
//! reaches `2^16`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

const TOP: u64 = (1 << 32) - 1;
const HALF: u64 = 1 << 31;
const QUARTER: u64 = 1 << 30;
const THREE_QUARTERS: u64 = 3 << 30;
const MAX_TOTAL: u32 = 1 << 16;
/// Zero bits the decoder may read past the end of a valid stream.
const TAIL_SLACK_BITS: usize = 32;

#[derive(Clone, Debug)]
struct FrequencyModel {
    counts: Vec<u32>,
    total: u32,
}

impl FrequencyModel {
    fn new(alphabet: usize) -> Self {
        Self {
            counts: vec![1; alphabet],
            total: alphabet as u32,
        }
    }

    fn range_of(&self, sym: usize) -> (u32, u32) {
        let low: u32 = self.counts[..sym].iter().sum();
        (low, low + self.counts[sym])
    }

    fn update(&mut self, sym: usize) {
        self.counts[sym] += 1;
        self.total += 1;
        if self.total >= MAX_TOTAL {
            self.total = 0;
            for c in &mut self.counts {
                *c = c.div_ceil(2);
                self.total += *c;
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Models(BTreeMap<u32, FrequencyModel>);

impl Models {
    fn get(&mut self, alphabet: u32) -> &mut FrequencyModel {
        self.0
            .entry(alphabet)
            .or_insert_with(|| FrequencyModel::new(alphabet as usize))
    }
}

fn check_alphabet(alphabet: u32) -> Result<()> {
    if alphabet == 0 || alphabet > MAX_TOTAL / 2 {
        return Err(Error::InvalidArgument(format!("alphabet size {alphabet} unsupported")));
    }
    Ok(())
}

/// Incremental encoder.
#[derive(Debug, Default)]
pub struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: Vec<u8>,
    bit_count: u8,
    current: u8,
    models: Models,
    symbols: usize,
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            high: TOP,
            ..Default::default()
        }
    }

    fn push_bit(&mut self, bit: bool) {
        self.current = (self.current << 1) | bit as u8;
        self.bit_count += 1;
        if self.bit_count == 8 {
            self.out.push(self.current);
            self.bit_count = 0;
            self.current = 0;
        }
    }

    fn emit(&mut self, bit: bool) {
        self.push_bit(bit);
        for _ in 0..self.pending {
            self.push_bit(!bit);
        }
        self.pending = 0;
    }

    pub fn encode(&mut self, symbol: u32, alphabet: u32) -> Result<()> {
        check_alphabet(alphabet)?;
        if symbol >= alphabet {
            return Err(Error::InvalidArgument(format!(
                "symbol {symbol} outside alphabet of {alphabet}"
            )));
        }
        let model = self.models.get(alphabet);
        let (lo, hi) = model.range_of(symbol as usize);
        let total = model.total as u64;
        model.update(symbol as usize);

        let range = self.high - self.low + 1;
        self.high = self.low + range * hi as u64 / total - 1;
        self.low += range * lo as u64 / total;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
        self.symbols += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        if self.symbols == 0 {
            return Vec::new();
        }
        self.pending += 1;
        if self.low < QUARTER {
            self.emit(false);
        } else {
            self.emit(true);
        }
        if self.bit_count > 0 {
            let shift = 8 - self.bit_count;
            self.out.push(self.current << shift);
        }
        self.out
    }
}

/// Incremental decoder over a byte slice.
#[derive(Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    bit_pos: usize,
    low: u64,
    high: u64,
    value: u64,
    models: Models,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            data,
            bit_pos: 0,
            low: 0,
            high: TOP,
            value: 0,
            models: Models::default(),
        };
        for _ in 0..32 {
            d.value = (d.value << 1) | d.read_bit()? as u64;
        }
        Ok(d)
    }

    fn read_bit(&mut self) -> Result<bool> {
        let byte = self.bit_pos / 8;
        let bit = if byte < self.data.len() {
            (self.data[byte] >> (7 - self.bit_pos % 8)) & 1 == 1
        } else if self.bit_pos < self.data.len() * 8 + TAIL_SLACK_BITS {
            false
        } else {
            return Err(Error::CorruptStream { offset: self.data.len() });
        };
        self.bit_pos += 1;
        Ok(bit)
    }

    pub fn decode(&mut self, alphabet: u32) -> Result<u32> {
        check_alphabet(alphabet)?;
        let offset = self.bit_pos / 8;
        let model = self.models.get(alphabet);
        let total = model.total as u64;
        let range = self.high - self.low + 1;
        let above = self
            .value
            .checked_sub(self.low)
            .ok_or(Error::CorruptStream { offset })?;
        let target = ((above + 1) * total - 1) / range;
        if target >= total {
            return Err(Error::CorruptStream { offset });
        }
        let mut sym = 0usize;
        let mut cum = 0u64;
        while cum + model.counts[sym] as u64 <= target {
            cum += model.counts[sym] as u64;
            sym += 1;
        }
        let (lo, hi) = (cum, cum + model.counts[sym] as u64);
        model.update(sym);

        self.high = self.low + range * hi / total - 1;
        self.low += range * lo / total;
        loop {
            if self.high < HALF {
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.read_bit()? as u64;
        }
        Ok(sym as u32)
    }
}

/// Encodes `(symbol, alphabet)` pairs.
pub fn aac_encode(symbols: &[(u32, u32)]) -> Result<Vec<u8>> {
    let mut enc = Encoder::new();
    for &(s, a) in symbols {
        enc.encode(s, a)?;
    }
    Ok(enc.finish())
}

/// Decodes one symbol per entry of the alphabet schedule.
pub fn aac_decode(bytes: &[u8], alphabets: &[u32]) -> Result<Vec<u32>> {
    if alphabets.is_empty() {
        return Ok(Vec::new());
    }
    let mut dec = Decoder::new(bytes)?;
    alphabets.iter().map(|&a| dec.decode(a)).collect()
}
