//! PLY reading and writing.
//!
//! Supports `ascii 1.0` and `binary_little_endian 1.0` files with a vertex
//! element carrying float/double `x y z` and uchar `red green blue`.
//! Unrelated fixed-size vertex properties are skipped; elements after the
//! vertex element are ignored. The parser is meant to survive arbitrary
//! bytes without panicking.

use crate::cloud::RawCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 => 4,
            Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    ty: Scalar,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
    has_list: bool,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    payload_start: usize,
}

fn err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Ply {
        offset,
        reason: reason.into(),
    }
}

/// Read one header line (terminated by `\n`, optional `\r` stripped).
fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<(&'a str, usize)> {
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|i| start + i)?;
    *pos = end + 1;
    let mut line = &bytes[start..end];
    if line.last() == Some(&b'\r') {
        line = &line[..line.len() - 1];
    }
    std::str::from_utf8(line).ok().map(|s| (s, start))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let (magic, off) = next_line(bytes, &mut pos).ok_or_else(|| err(0, "not a PLY file"))?;
    if magic.trim() != "ply" {
        return Err(err(off, "not a PLY file (missing 'ply' magic)"));
    }

    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (line, off) = next_line(bytes, &mut pos)
            .ok_or_else(|| err(bytes.len(), "malformed header: no end_header"))?;
        let mut tok = line.split_ascii_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let kind = tok.next().unwrap_or("");
                let version = tok.next().unwrap_or("");
                if version != "1.0" {
                    return Err(err(off, format!("unsupported format version '{version}'")));
                }
                format = Some(match kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return Err(err(off, format!("unsupported format '{other}'"))),
                });
            }
            Some("element") => {
                let name = tok.next().unwrap_or("").to_string();
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(off, "malformed element count"))?;
                if name.is_empty() {
                    return Err(err(off, "malformed element line"));
                }
                elements.push(Element {
                    name,
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(off, "property before any element"))?;
                let first = tok.next().unwrap_or("");
                if first == "list" {
                    // Two type tokens and a name follow; size is per-row dynamic.
                    element.has_list = true;
                    continue;
                }
                let ty = Scalar::parse(first)
                    .ok_or_else(|| err(off, format!("unsupported property type '{first}'")))?;
                let name = tok.next().unwrap_or("").to_string();
                if name.is_empty() {
                    return Err(err(off, "malformed property line"));
                }
                element.properties.push(Property { name, ty });
            }
            Some("end_header") => break,
            Some(other) => return Err(err(off, format!("malformed header line '{other}'"))),
        }
    }

    Ok(Header {
        format: format.ok_or_else(|| err(0, "malformed header: no format line"))?,
        elements,
        payload_start: pos,
    })
}

/// Column layout of the vertex element we care about.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    properties: Vec<Property>,
}

fn vertex_layout(header: &Header, need_color: bool, payload_off: usize) -> Result<VertexLayout> {
    let vertex = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| err(payload_off, "missing element vertex"))?;
    if vertex.has_list {
        return Err(err(payload_off, "list property on vertex element"));
    }
    let find = |name: &str| vertex.properties.iter().position(|p| p.name == name);
    let mut xyz = [0usize; 3];
    for (d, name) in ["x", "y", "z"].iter().enumerate() {
        let idx = find(name).ok_or_else(|| err(payload_off, format!("missing property {name}")))?;
        match vertex.properties[idx].ty {
            Scalar::F32 | Scalar::F64 => xyz[d] = idx,
            other => {
                return Err(err(
                    payload_off,
                    format!("unsupported property type {other:?} for {name}"),
                ))
            }
        }
    }
    let rgb = if need_color {
        let mut rgb = [0usize; 3];
        for (d, name) in ["red", "green", "blue"].iter().enumerate() {
            let idx =
                find(name).ok_or_else(|| err(payload_off, format!("missing property {name}")))?;
            if vertex.properties[idx].ty != Scalar::U8 {
                return Err(err(
                    payload_off,
                    format!("unsupported property type for {name} (need uchar)"),
                ));
            }
            rgb[d] = idx;
        }
        Some(rgb)
    } else {
        None
    };
    Ok(VertexLayout {
        xyz,
        rgb,
        properties: vertex.properties.clone(),
    })
}

fn read_scalar_le(bytes: &[u8], ty: Scalar) -> f64 {
    match ty {
        Scalar::I8 => bytes[0] as i8 as f64,
        Scalar::U8 => bytes[0] as f64,
        Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        Scalar::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        Scalar::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        Scalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        Scalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
    }
}

fn parse_vertices(
    bytes: &[u8],
    header: &Header,
    layout: &VertexLayout,
) -> Result<(Vec<[f64; 3]>, Vec<[u8; 3]>)> {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut pos = header.payload_start;

    match header.format {
        Format::Ascii => {
            for element in &header.elements {
                let is_vertex = element.name == "vertex";
                // One line per row, list properties included, so elements
                // before the vertex element can be skipped line by line.
                for _ in 0..element.count {
                    let (line, off) = next_line(bytes, &mut pos)
                        .ok_or_else(|| err(bytes.len(), "truncated payload"))?;
                    if !is_vertex {
                        continue;
                    }
                    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
                    if fields.len() != layout.properties.len() {
                        return Err(err(
                            off,
                            format!(
                                "malformed vertex line: {} fields, expected {}",
                                fields.len(),
                                layout.properties.len()
                            ),
                        ));
                    }
                    let mut p = [0.0f64; 3];
                    for d in 0..3 {
                        p[d] = fields[layout.xyz[d]]
                            .parse()
                            .map_err(|_| err(off, "malformed vertex coordinate"))?;
                    }
                    positions.push(p);
                    if let Some(rgb_idx) = layout.rgb {
                        let mut c = [0u8; 3];
                        for d in 0..3 {
                            c[d] = fields[rgb_idx[d]]
                                .parse()
                                .map_err(|_| err(off, "malformed color value"))?;
                        }
                        colors.push(c);
                    }
                }
                if is_vertex {
                    break;
                }
            }
        }
        Format::BinaryLe => {
            for element in &header.elements {
                let is_vertex = element.name == "vertex";
                if element.has_list {
                    if is_vertex {
                        return Err(err(pos, "list property on vertex element"));
                    }
                    return Err(err(pos, "list property before vertex element"));
                }
                let row: usize = element.properties.iter().map(|p| p.ty.size()).sum();
                let need = element
                    .count
                    .checked_mul(row)
                    .ok_or_else(|| err(pos, "element size overflow"))?;
                if bytes.len() - pos < need {
                    return Err(err(bytes.len(), "truncated payload"));
                }
                if is_vertex {
                    positions.reserve(element.count);
                    let mut offsets = Vec::with_capacity(element.properties.len());
                    let mut acc = 0;
                    for p in &element.properties {
                        offsets.push(acc);
                        acc += p.ty.size();
                    }
                    for i in 0..element.count {
                        let base = pos + i * row;
                        let mut p = [0.0f64; 3];
                        for d in 0..3 {
                            let idx = layout.xyz[d];
                            p[d] = read_scalar_le(
                                &bytes[base + offsets[idx]..],
                                element.properties[idx].ty,
                            );
                        }
                        positions.push(p);
                        if let Some(rgb_idx) = layout.rgb {
                            let mut c = [0u8; 3];
                            for d in 0..3 {
                                c[d] = bytes[base + offsets[rgb_idx[d]]];
                            }
                            colors.push(c);
                        }
                    }
                    break;
                }
                pos += need;
            }
        }
    }

    if positions.is_empty() {
        return Err(err(header.payload_start, "vertex element has no rows"));
    }
    Ok((positions, colors))
}

/// Parse a full PLY file with positions and colors.
pub fn parse_ply(bytes: &[u8]) -> Result<RawCloud> {
    let header = parse_header(bytes)?;
    let layout = vertex_layout(&header, true, header.payload_start)?;
    let (positions, colors) = parse_vertices(bytes, &header, &layout)?;
    RawCloud::new(positions, colors)
}

/// Parse only vertex positions; colors may be absent.
pub fn parse_ply_geometry(bytes: &[u8]) -> Result<Vec<[f64; 3]>> {
    let header = parse_header(bytes)?;
    let layout = vertex_layout(&header, false, header.payload_start)?;
    let (positions, _) = parse_vertices(bytes, &header, &layout)?;
    Ok(positions)
}

/// Serialize positions and colors as PLY.
pub fn write_ply(positions: &[[f64; 3]], colors: &[[u8; 3]], format: PlyFormat) -> Vec<u8> {
    assert_eq!(positions.len(), colors.len());
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLe => "binary_little_endian",
    };
    out.extend_from_slice(format!("ply\nformat {fmt} 1.0\n").as_bytes());
    out.extend_from_slice(format!("element vertex {}\n", positions.len()).as_bytes());
    out.extend_from_slice(
        b"property float x\nproperty float y\nproperty float z\n\
          property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
    );
    match format {
        PlyFormat::Ascii => {
            for (p, c) in positions.iter().zip(colors) {
                out.extend_from_slice(
                    format!(
                        "{} {} {} {} {} {}\n",
                        p[0] as f32, p[1] as f32, p[2] as f32, c[0], c[1], c[2]
                    )
                    .as_bytes(),
                );
            }
        }
        PlyFormat::BinaryLe => {
            for (p, c) in positions.iter().zip(colors) {
                for d in 0..3 {
                    out.extend_from_slice(&(p[d] as f32).to_le_bytes());
                }
                out.extend_from_slice(c);
            }
        }
    }
    out
}

/// Serialize positions only (geometry side-channel files).
pub fn write_ply_geometry(positions: &[[f64; 3]], format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLe => "binary_little_endian",
    };
    out.extend_from_slice(format!("ply\nformat {fmt} 1.0\n").as_bytes());
    out.extend_from_slice(format!("element vertex {}\n", positions.len()).as_bytes());
    out.extend_from_slice(b"property float x\nproperty float y\nproperty float z\nend_header\n");
    match format {
        PlyFormat::Ascii => {
            for p in positions {
                out.extend_from_slice(
                    format!("{} {} {}\n", p[0] as f32, p[1] as f32, p[2] as f32).as_bytes(),
                );
            }
        }
        PlyFormat::BinaryLe => {
            for p in positions {
                for d in 0..3 {
                    out.extend_from_slice(&(p[d] as f32).to_le_bytes());
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLe,
}
