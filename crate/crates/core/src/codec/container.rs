//! The `.emr4d` container.
//!
//! ```text
//! magic "EMR4D\0" | version u8 | sections...
//! section: tag [4 ASCII] | length u32 LE | crc32 u32 LE | payload
//! ```
//!
//! Sections appear in the fixed order GEOM, SHAD, OFFS, CHNY, CHNU, CHNV.
//! Framing problems (magic, version, truncation, unexpected tags) are
//! container errors; a section whose checksum or contents are wrong is a
//! payload error naming that section.

use super::channel::{section_tag, ChannelSection};
use crate::error::{Error, Result};
use crate::geometry::{key_indices, Channel};
use crate::preprocess::{decode_parallax, decode_shadow, encode_parallax, encode_shadow, ParallaxMap, ShadowModel};

pub const MAGIC: &[u8; 6] = b"EMR4D\0";
pub const VERSION: u8 = 1;
pub const GEOMETRY_SECTION: &str = "GEOM";
const TAGS: [&str; 6] = ["GEOM", "SHAD", "OFFS", "CHNY", "CHNU", "CHNV"];

/// Everything the decoder needs to lay out the EIA and its blocks.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeometryHeader {
    pub ei_rows: usize,
    pub ei_cols: usize,
    pub ei_size: usize,
    pub chroma_size: usize,
    pub interval: usize,
    pub gop: usize,
    pub cb_y: usize,
    pub cb_uv: usize,
    pub lambda: f64,
    pub key_rows: Vec<usize>,
    pub key_cols: Vec<usize>,
}

impl GeometryHeader {
    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut put = |v: usize| -> Result<()> {
            let v = u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit the geometry header")))?;
            out.extend_from_slice(&v.to_le_bytes());
            Ok(())
        };
        for v in [
            self.ei_rows,
            self.ei_cols,
            self.ei_size,
            self.chroma_size,
            self.interval,
            self.gop,
            self.cb_y,
            self.cb_uv,
        ] {
            put(v)?;
        }
        for list in [&self.key_rows, &self.key_cols] {
            put(list.len())?;
            for &v in list.iter() {
                put(v)?;
            }
        }
        out.extend_from_slice(&self.lambda.to_le_bytes());
        Ok(out)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::payload(GEOMETRY_SECTION, r);
        let mut pos = 0;
        let mut get = || -> Result<usize> {
            let v = bytes.get(pos..pos + 2).ok_or_else(|| bad("truncated"))?;
            pos += 2;
            Ok(u16::from_le_bytes([v[0], v[1]]) as usize)
        };
        let f: Vec<usize> = (0..8).map(|_| get()).collect::<Result<_>>()?;
        let nr = get()?;
        let key_rows = (0..nr).map(|_| get()).collect::<Result<Vec<_>>>()?;
        let nc = get()?;
        let key_cols = (0..nc).map(|_| get()).collect::<Result<Vec<_>>>()?;
        let tail = &bytes[pos.min(bytes.len())..];
        if tail.len() != 8 {
            return Err(bad("bad length"));
        }
        let lambda = f64::from_le_bytes(tail.try_into().unwrap());
        let g = Self {
            ei_rows: f[0],
            ei_cols: f[1],
            ei_size: f[2],
            chroma_size: f[3],
            interval: f[4],
            gop: f[5],
            cb_y: f[6],
            cb_uv: f[7],
            lambda,
            key_rows,
            key_cols,
        };
        if g.ei_rows == 0 || g.ei_cols == 0 || g.ei_size == 0 || g.chroma_size == 0 || g.interval == 0 || g.gop == 0 {
            return Err(bad("zero dimension"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(bad("invalid lambda"));
        }
        if g.key_rows != key_indices(g.ei_rows, g.interval) || g.key_cols != key_indices(g.ei_cols, g.interval) {
            return Err(bad("key indices do not match the interval"));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bitstream {
    pub geometry: GeometryHeader,
    pub shadow: ShadowModel,
    pub parallax: ParallaxMap,
    /// Y, U, V.
    pub channels: Vec<ChannelSection>,
}

/// Byte size of each section payload, by tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectionSizes(pub Vec<(String, usize)>);

impl SectionSizes {
    pub fn get(&self, tag: &str) -> usize {
        self.0.iter().find(|(t, _)| t == tag).map(|(_, s)| *s).unwrap_or(0)
    }
}

fn write_section(out: &mut Vec<u8>, tag: &str, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| Error::Container(format!("section {tag} too large")))?;
    out.extend_from_slice(tag.as_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    Ok(())
}

impl Bitstream {
    pub fn section_payloads(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        if self.channels.len() != 3 {
            return Err(Error::InvalidArgument("bitstream needs Y, U and V sections".into()));
        }
        let mut out = vec![
            (TAGS[0], self.geometry.to_bytes()?),
            (TAGS[1], encode_shadow(&self.shadow)),
            (TAGS[2], encode_parallax(&self.parallax)?),
        ];
        for (ch, sec) in Channel::ALL.into_iter().zip(&self.channels) {
            if sec.channel != ch {
                return Err(Error::InvalidArgument("channel sections out of order".into()));
            }
            out.push((section_tag(ch), sec.to_bytes()?));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::from(&MAGIC[..]);
        out.push(VERSION);
        for (tag, payload) in self.section_payloads()? {
            write_section(&mut out, tag, &payload)?;
        }
        Ok(out)
    }

    pub fn section_sizes(&self) -> Result<SectionSizes> {
        Ok(SectionSizes(
            self.section_payloads()?
                .into_iter()
                .map(|(t, p)| (t.to_string(), p.len()))
                .collect(),
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = bytes[MAGIC.len()];
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let mut pos = MAGIC.len() + 1;
        let mut payloads = Vec::with_capacity(TAGS.len());
        for tag in TAGS {
            let head = bytes
                .get(pos..pos + 12)
                .ok_or_else(|| Error::Container(format!("truncated before section {tag}")))?;
            if &head[..4] != tag.as_bytes() {
                return Err(Error::Container(format!(
                    "expected section {tag}, found {:?}",
                    String::from_utf8_lossy(&head[..4])
                )));
            }
            let len = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
            let crc = u32::from_le_bytes(head[8..12].try_into().unwrap());
            let payload = bytes
                .get(pos + 12..pos + 12 + len)
                .ok_or_else(|| Error::Container(format!("section {tag} truncated")))?;
            if crc32fast::hash(payload) != crc {
                return Err(Error::payload(tag, "checksum mismatch"));
            }
            payloads.push(payload);
            pos += 12 + len;
        }
        if pos != bytes.len() {
            return Err(Error::Container(format!("{} trailing bytes", bytes.len() - pos)));
        }
        let geometry = GeometryHeader::from_bytes(payloads[0])?;
        let shadow = decode_shadow(payloads[1])?;
        let parallax = decode_parallax(payloads[2])?;
        if parallax.rows != geometry.ei_rows || parallax.cols != geometry.ei_cols {
            return Err(Error::payload(TAGS[2], "offset matrix size disagrees with geometry"));
        }
        let channels = Channel::ALL
            .into_iter()
            .zip(&payloads[3..])
            .map(|(ch, p)| ChannelSection::from_bytes(ch, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geometry,
            shadow,
            parallax,
            channels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quant::QuantParam;

    fn empty_channel(ch: Channel) -> ChannelSection {
        let n = if ch.is_luma() { 14 } else { 10 };
        ChannelSection {
            channel: ch,
            mu_z_bits: 4,
            header: vec![QuantParam { bits: 4, min: 0.0, span: 0.0 }; n],
            blocks: Vec::new(),
        }
    }

    fn sample() -> Bitstream {
        let mut header = empty_channel(Channel::Y).header;
        for (i, q) in header.iter_mut().enumerate() {
            q.bits = crate::codec::bits::bit_table(Channel::Y, 1000.0).multi[i].1;
        }
        Bitstream {
            geometry: GeometryHeader {
                ei_rows: 6,
                ei_cols: 11,
                ei_size: 75,
                chroma_size: 38,
                interval: 5,
                gop: 4,
                cb_y: 19,
                cb_uv: 38,
                lambda: 1000.0,
                key_rows: vec![0, 5],
                key_cols: vec![0, 5, 10],
            },
            shadow: ShadowModel::default(),
            parallax: ParallaxMap::uniform(6, 11, 3, 2),
            channels: Channel::ALL.into_iter().map(empty_channel).collect(),
        }
    }

    #[test]
    fn round_trip_and_errors() {
        let bs = sample();
        let bytes = bs.to_bytes().unwrap();
        let back = Bitstream::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.geometry, bs.geometry);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Bitstream::from_bytes(&bad), Err(Error::Container(_))));
        assert!(matches!(Bitstream::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Container(_))));

        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0xFF;
        let err = Bitstream::from_bytes(&flipped).unwrap_err();
        assert!(err.is_payload(), "{err}");
    }
}
