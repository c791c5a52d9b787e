//! Minimal PLY reader/writer for colored voxel clouds.
//!
//! Reads ASCII and binary little-endian files carrying `x y z` and
//! `red green blue` vertex properties. Writes a `comment sedd depth N` line
//! so the bit depth survives a round trip; files without it get the
//! smallest depth that holds every coordinate.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{merge_duplicates, Coord, PointCloud, Rgb};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    depth: Option<u32>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::PlyParse { line, msg: msg.into() }
}

fn next_line<R: BufRead>(r: &mut R, line_no: &mut usize) -> Result<Option<(usize, String)>> {
    let mut s = String::new();
    let n = r.read_line(&mut s)?;
    *line_no += 1;
    if n == 0 {
        return Ok(None);
    }
    Ok(Some((*line_no, s.trim_end_matches(['\n', '\r']).to_string())))
}

fn read_header<R: BufRead>(r: &mut R) -> Result<(Header, usize)> {
    let mut line_no = 0;
    match next_line(r, &mut line_no)? {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing 'ply' magic")),
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut depth = None;
    loop {
        let (ln, line) = next_line(r, &mut line_no)?.ok_or_else(|| parse_err(line_no, "unexpected end of header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["end_header"] => return Ok((Header { format: format.ok_or_else(|| parse_err(ln, "no format line"))?, elements, depth }, ln)),
            ["format", f, _ver] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(parse_err(ln, format!("unsupported format '{other}'"))),
                });
            }
            ["comment", "sedd", "depth", d] => {
                depth = Some(d.parse().map_err(|_| parse_err(ln, "bad depth comment"))?);
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| parse_err(ln, format!("bad element count '{count}'")))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(ln, "property before element"))?;
                let count = Scalar::parse(count).ok_or_else(|| parse_err(ln, format!("unknown type '{count}'")))?;
                let item = Scalar::parse(item).ok_or_else(|| parse_err(ln, format!("unknown type '{item}'")))?;
                el.props.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(ln, "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_err(ln, format!("unknown type '{ty}'")))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(parse_err(ln, format!("unrecognized header line '{line}'"))),
        }
    }
}

/// Column positions of the needed vertex properties.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
    types: Vec<Scalar>,
}

fn vertex_layout(el: &Element, header_end: usize) -> Result<VertexLayout> {
    let mut types = Vec::new();
    let mut xyz: [Option<usize>; 3] = [None; 3];
    let mut rgb: [Option<usize>; 3] = [None; 3];
    for (i, p) in el.props.iter().enumerate() {
        match p {
            Property::List { name, .. } => {
                return Err(parse_err(header_end, format!("list property '{name}' on vertex element is not supported")))
            }
            Property::Scalar { name, ty } => {
                types.push(*ty);
                match name.as_str() {
                    "x" => xyz[0] = Some(i),
                    "y" => xyz[1] = Some(i),
                    "z" => xyz[2] = Some(i),
                    "red" | "r" => rgb[0] = Some(i),
                    "green" | "g" => rgb[1] = Some(i),
                    "blue" | "b" => rgb[2] = Some(i),
                    _ => {}
                }
            }
        }
    }
    let take = |v: [Option<usize>; 3]| -> Option<[usize; 3]> { Some([v[0]?, v[1]?, v[2]?]) };
    let xyz = take(xyz).ok_or_else(|| parse_err(header_end, "vertex element lacks x/y/z"))?;
    let rgb = take(rgb).ok_or_else(|| Error::AttributesRequired("vertex element lacks red/green/blue".into()))?;
    Ok(VertexLayout { xyz, rgb, types })
}

fn color_value(v: f64, ty: Scalar) -> f64 {
    let c = if ty.is_integer() { v / 255.0 } else { v };
    c.clamp(0.0, 1.0)
}

fn skip_binary_element<R: Read>(r: &mut R, el: &Element) -> Result<()> {
    let mut buf = [0u8; 8];
    for _ in 0..el.count {
        for p in &el.props {
            match p {
                Property::Scalar { ty, .. } => r.read_exact(&mut buf[..ty.size()])?,
                Property::List { count, item, .. } => {
                    r.read_exact(&mut buf[..count.size()])?;
                    let n = count.read_le(&buf) as usize;
                    for _ in 0..n {
                        r.read_exact(&mut buf[..item.size()])?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Parses a PLY stream into a voxel cloud.
pub fn read_ply<R: Read>(reader: R) -> Result<PointCloud> {
    let mut r = BufReader::new(reader);
    let (header, header_end) = read_header(&mut r)?;
    let vidx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(header_end, "no vertex element"))?;
    let layout = vertex_layout(&header.elements[vidx], header_end)?;
    let count = header.elements[vidx].count;

    let mut xyz: Vec<[f64; 3]> = Vec::with_capacity(count);
    let mut rgb: Vec<Rgb> = Vec::with_capacity(count);
    match header.format {
        PlyFormat::Ascii => {
            let mut line_no = header_end;
            let mut line = String::new();
            // Skip whole lines of preceding elements.
            let before: usize = header.elements[..vidx].iter().map(|e| e.count).sum();
            for _ in 0..before {
                line.clear();
                r.read_line(&mut line)?;
                line_no += 1;
            }
            for _ in 0..count {
                line.clear();
                if r.read_line(&mut line)? == 0 {
                    return Err(parse_err(line_no + 1, "unexpected end of vertex data"));
                }
                line_no += 1;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(line_no, format!("bad number: {e}")))?;
                if vals.len() < layout.types.len() {
                    return Err(parse_err(line_no, "too few values in vertex line"));
                }
                xyz.push(layout.xyz.map(|i| vals[i]));
                rgb.push([0, 1, 2].map(|k| color_value(vals[layout.rgb[k]], layout.types[layout.rgb[k]])));
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for el in &header.elements[..vidx] {
                skip_binary_element(&mut r, el)?;
            }
            let offsets: Vec<usize> = layout
                .types
                .iter()
                .scan(0, |acc, t| {
                    let o = *acc;
                    *acc += t.size();
                    Some(o)
                })
                .collect();
            let stride: usize = layout.types.iter().map(|t| t.size()).sum();
            let mut rec = vec![0u8; stride];
            for _ in 0..count {
                r.read_exact(&mut rec).map_err(|_| parse_err(header_end, "truncated binary vertex data"))?;
                let get = |i: usize| layout.types[i].read_le(&rec[offsets[i]..]);
                xyz.push(layout.xyz.map(get));
                rgb.push([0, 1, 2].map(|k| color_value(get(layout.rgb[k]), layout.types[layout.rgb[k]])));
            }
        }
    }

    let coords: Vec<Coord> = xyz.iter().map(|p| p.map(|v| v.round() as i32)).collect();
    if let Some(c) = coords.iter().find(|c| c.iter().any(|&v| v < 0)) {
        return Err(Error::InvalidCloud(format!("negative coordinate {c:?}")));
    }
    let (coords, colors) = merge_duplicates(&coords, &rgb);
    let max = coords.iter().flat_map(|c| c.iter().copied()).max().unwrap_or(0);
    let needed = (32 - (max as u32).leading_zeros()).max(1);
    let depth = match header.depth {
        Some(d) if d >= needed && d <= 16 => d,
        _ => needed,
    };
    PointCloud::new(coords, colors, depth)
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_ply(File::open(path)?)
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ply<W: Write>(pc: &PointCloud, format: PlyFormat, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let coord_ty = if pc.depth <= 15 { "short" } else { "int" };
    write!(
        w,
        "ply\nformat {fmt} 1.0\ncomment sedd depth {}\nelement vertex {}\n\
         property {coord_ty} x\nproperty {coord_ty} y\nproperty {coord_ty} z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        pc.depth,
        pc.len()
    )?;
    for (c, col) in pc.coords.iter().zip(&pc.colors) {
        let rgb = col.map(to_u8);
        match format {
            PlyFormat::Ascii => writeln!(w, "{} {} {} {} {} {}", c[0], c[1], c[2], rgb[0], rgb[1], rgb[2])?,
            PlyFormat::BinaryLittleEndian => {
                for v in c {
                    if pc.depth <= 15 {
                        w.write_all(&(*v as i16).to_le_bytes())?;
                    } else {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                w.write_all(&rgb)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_ply(pc: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    write_ply(pc, format, File::create(path)?)
}
