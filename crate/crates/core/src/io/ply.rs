//! Binary little-endian PLY in the vanilla 3DGS vertex layout.
//!
//! Values are stored as `float` and passed through unactivated: opacity stays
//! a logit, scales stay logarithmic. Any value representable in `f32`
//! survives a write/read cycle bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::{sh_basis_count, GaussianCloud};

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

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, Scalar)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.properties.iter().map(|(_, t)| t.size()).sum()
    }

    fn offset_of(&self, name: &str) -> Option<(usize, Scalar)> {
        let mut off = 0;
        for (n, t) in &self.properties {
            if n == name {
                return Some((off, *t));
            }
            off += t.size();
        }
        None
    }
}

fn parse_header(path: &Path, reader: &mut impl BufRead) -> Result<Vec<Element>> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<bool> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::io(path, e))?;
        Ok(n > 0)
    };

    if !next_line(&mut line)? || line.trim_end() != "ply" {
        return Err(Error::format(path, "missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    loop {
        if !next_line(&mut line)? {
            return Err(Error::format(path, "header ended without 'end_header'"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => saw_format = true,
            ["format", other, ..] => {
                return Err(Error::format(path, format!("unsupported PLY format '{other}'")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(path, format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", ..] => {
                return Err(Error::format(path, "list properties are not supported"))
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::format(path, format!("unknown property type '{ty}'")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, "property before any element"))?;
                el.properties.push((name.to_string(), ty));
            }
            _ => return Err(Error::format(path, format!("unrecognised header line '{}'", line.trim_end()))),
        }
    }
    if !saw_format {
        return Err(Error::format(path, "missing format line"));
    }
    Ok(elements)
}

/// Reads a 3DGS PLY; SH degree is inferred from the `f_rest_*` count.
pub fn read_ply(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let elements = parse_header(path, &mut reader)?;

    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::format(path, "no vertex element"))?;
    for el in &elements[..vertex_pos] {
        let mut skip = vec![0u8; el.count * el.stride()];
        reader.read_exact(&mut skip).map_err(|e| Error::io(path, e))?;
    }
    let vertex = &elements[vertex_pos];

    let rest_count = vertex
        .properties
        .iter()
        .filter(|(n, _)| n.starts_with("f_rest_"))
        .count();
    let degree = match rest_count {
        0 => 0u8,
        9 => 1,
        24 => 2,
        45 => 3,
        n => return Err(Error::format(path, format!("unsupported f_rest count {n}"))),
    };

    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..rest_count).map(|i| format!("f_rest_{i}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|s| s.to_string()),
    );
    let fields = names
        .iter()
        .map(|n| {
            vertex
                .offset_of(n)
                .ok_or_else(|| Error::format(path, format!("missing required property '{n}'")))
        })
        .collect::<Result<Vec<_>>>()?;

    let stride = vertex.stride();
    let mut data = vec![0u8; vertex.count * stride];
    reader
        .read_exact(&mut data)
        .map_err(|_| Error::format(path, format!("truncated vertex data ({} expected)", vertex.count)))?;

    let k = sh_basis_count(degree);
    let mut cloud = GaussianCloud::with_capacity(degree, vertex.count)?;
    let mut row = vec![0.0f64; fields.len()];
    for rec in data.chunks_exact(stride.max(1)).take(vertex.count) {
        for (dst, &(off, ty)) in row.iter_mut().zip(&fields) {
            *dst = ty.read(&rec[off..]);
        }
        cloud.means.push(Vector3::new(row[0], row[1], row[2]));
        cloud.sh.extend_from_slice(&row[3..6]);
        cloud.sh.extend_from_slice(&row[6..6 + 3 * (k - 1)]);
        let tail = &row[6 + 3 * (k - 1)..];
        cloud.opacity_logits.push(tail[0]);
        cloud.log_scales.push(Vector3::new(tail[1], tail[2], tail[3]));
        cloud.rotations.push([tail[4], tail[5], tail[6], tail[7]]);
    }
    Ok(cloud)
}

/// Header text for a cloud of `n` primitives at SH `degree`.
fn header(n: usize, degree: u8) -> String {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    h.push_str(&format!("element vertex {n}\n"));
    for p in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"] {
        h.push_str(&format!("property float {p}\n"));
    }
    for i in 0..3 * (sh_basis_count(degree) - 1) {
        h.push_str(&format!("property float f_rest_{i}\n"));
    }
    for p in ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"] {
        h.push_str(&format!("property float {p}\n"));
    }
    h.push_str("end_header\n");
    h
}

/// Serialises a cloud into PLY bytes.
pub fn encode_ply(cloud: &GaussianCloud) -> Vec<u8> {
    let degree = cloud.sh_degree();
    let stride = cloud.sh_stride();
    let mut out = header(cloud.len(), degree).into_bytes();
    out.reserve(cloud.len() * (11 + stride) * 4);
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for i in 0..cloud.len() {
        let m = cloud.means[i];
        put(m.x);
        put(m.y);
        put(m.z);
        for &c in cloud.sh_of(i) {
            put(c);
        }
        put(cloud.opacity_logits[i]);
        for s in cloud.log_scales[i].iter() {
            put(*s);
        }
        for q in cloud.rotations[i] {
            put(q);
        }
    }
    out
}

pub fn write_ply(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_ply(cloud)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
