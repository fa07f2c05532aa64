//! PLY vertex positions, ASCII or binary little-endian.
//!
//! Only the `vertex` element's `x`, `y`, `z` are kept. Elements declared before
//! it are parsed and skipped, list properties included.

use super::Reader;
use crate::error::{Error, Result};

const NAME: &str = "PLY";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return Err(Error::format(NAME, format!("unknown property type {s:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, r: &mut Reader<'_>) -> Result<f64> {
        let b = r.take(self.size())?;
        Ok(match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F64 => f64::from_le_bytes(b.try_into().expect("8 bytes")),
        })
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(Scalar, String),
    List(Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

fn parse_header(r: &mut Reader<'_>) -> Result<(Encoding, Vec<Element>)> {
    if r.line()?.trim_end() != "ply" {
        return Err(Error::format(NAME, "missing ply magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = r.line()?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLe),
            ["format", other, ..] => {
                return Err(Error::format(NAME, format!("unsupported format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(NAME, format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", c, i, _name] => elements
                .last_mut()
                .ok_or_else(|| Error::format(NAME, "property before any element"))?
                .properties
                .push(Property::List(Scalar::parse(c)?, Scalar::parse(i)?)),
            ["property", t, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format(NAME, "property before any element"))?
                .properties
                .push(Property::Scalar(Scalar::parse(t)?, name.to_string())),
            _ => return Err(Error::format(NAME, format!("bad header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format(NAME, "missing format line"))?;
    Ok((encoding, elements))
}

/// Reads one element row, returning its scalar property values in order
/// (list properties are consumed and skipped).
fn read_row(
    r: &mut Reader<'_>,
    enc: Encoding,
    el: &Element,
    tokens: &mut std::str::SplitAsciiWhitespace<'_>,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    let mut next_ascii = || -> Result<f64> {
        let t = tokens
            .next()
            .ok_or_else(|| Error::format(NAME, format!("truncated {} data", el.name)))?;
        t.parse::<f64>()
            .map_err(|_| Error::format(NAME, format!("bad number {t:?}")))
    };
    for p in &el.properties {
        match (p, enc) {
            (Property::Scalar(_, _), Encoding::Ascii) => out.push(next_ascii()?),
            (Property::Scalar(t, _), Encoding::BinaryLe) => out.push(t.read_le(r)?),
            (Property::List(..), Encoding::Ascii) => {
                let n = next_ascii()?;
                if !(n >= 0.0 && n.fract() == 0.0) {
                    return Err(Error::format(NAME, format!("bad list length {n}")));
                }
                for _ in 0..n as usize {
                    next_ascii()?;
                }
            }
            (Property::List(c, t), Encoding::BinaryLe) => {
                let n = c.read_le(r)?;
                if !(n >= 0.0 && n.fract() == 0.0) {
                    return Err(Error::format(NAME, format!("bad list length {n}")));
                }
                r.take((n as usize).checked_mul(t.size()).ok_or_else(|| Error::format(NAME, "list too long"))?)?;
            }
        }
    }
    Ok(())
}

/// Vertex positions of a PLY file.
pub fn read_ply_vertices(bytes: &[u8]) -> Result<Vec<[f64; 3]>> {
    let mut r = Reader::new(bytes, NAME);
    let (enc, elements) = parse_header(&mut r)?;
    let vertex_at = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::format(NAME, "no vertex element"))?;
    let vertex = &elements[vertex_at];
    let coord = |axis: &str| {
        vertex
            .properties
            .iter()
            .filter(|p| matches!(p, Property::Scalar(..)))
            .position(|p| matches!(p, Property::Scalar(_, n) if n == axis))
            .ok_or_else(|| Error::format(NAME, format!("vertex has no {axis} property")))
    };
    let cols = [coord("x")?, coord("y")?, coord("z")?];

    let text;
    let mut tokens = if enc == Encoding::Ascii {
        text = std::str::from_utf8(r.remaining())
            .map_err(|_| Error::format(NAME, "ASCII body is not valid text"))?;
        text.split_ascii_whitespace()
    } else {
        "".split_ascii_whitespace()
    };
    let mut row = Vec::new();
    for el in &elements[..vertex_at] {
        for _ in 0..el.count {
            read_row(&mut r, enc, el, &mut tokens, &mut row)?;
        }
    }
    // Cap the preallocation by what the input could possibly hold.
    let mut points = Vec::with_capacity(vertex.count.min(bytes.len()));
    for _ in 0..vertex.count {
        read_row(&mut r, enc, vertex, &mut tokens, &mut row)?;
        points.push([row[cols[0]], row[cols[1]], row[cols[2]]]);
    }
    Ok(points)
}
