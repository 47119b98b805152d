//! OBJ, binary PLY and binary STL.
//!
//! OBJ support covers `v` and `f` lines; anything else is skipped with a
//! warning. PLY is binary little-endian with `float` positions and optional
//! per-vertex scalar channels (the evaluation error map is stored as `error`).
//! STL is write-only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{cross, norm, Face, Mesh, MeshError, MeshResult, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
    Stl,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> MeshResult<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("obj") => Ok(Self::Obj),
            Some("ply") => Ok(Self::Ply),
            Some("stl") => Ok(Self::Stl),
            _ => Err(MeshError::UnsupportedFormat(path.display().to_string())),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Obj => "OBJ",
            Self::Ply => "PLY",
            Self::Stl => "STL",
        }
    }
}

pub fn load_mesh(bytes: &[u8], format: MeshFormat) -> MeshResult<Mesh> {
    match format {
        MeshFormat::Obj => read_obj(bytes),
        MeshFormat::Ply => read_ply(bytes),
        MeshFormat::Stl => Err(MeshError::UnsupportedFormat(
            "reading STL is not supported".into(),
        )),
    }
}

pub fn save_mesh(mesh: &Mesh, format: MeshFormat) -> MeshResult<Vec<u8>> {
    if format != MeshFormat::Ply {
        if let Some(name) = mesh.attributes().keys().next() {
            return Err(MeshError::UnsupportedAttribute {
                format: format.name(),
                name: name.clone(),
            });
        }
    }
    match format {
        MeshFormat::Obj => Ok(write_obj(mesh)),
        MeshFormat::Ply => Ok(write_ply(mesh)),
        MeshFormat::Stl => write_stl(mesh),
    }
}

pub fn load_mesh_file(path: impl AsRef<Path>) -> MeshResult<Mesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    load_mesh(&std::fs::read(path)?, format)
}

pub fn save_mesh_file(mesh: &Mesh, path: impl AsRef<Path>) -> MeshResult<()> {
    let path = path.as_ref();
    let bytes = save_mesh(mesh, MeshFormat::from_path(path)?)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

fn parse_error(location: String, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        location,
        message: message.into(),
    }
}

fn read_obj(bytes: &[u8]) -> MeshResult<Mesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_error(format!("byte {}", e.valid_up_to()), "invalid UTF-8"))?;
    let mut positions: Vec<Point> = Vec::new();
    let mut faces: Vec<Face> = Vec::new();
    let mut skipped = BTreeSet::new();

    for (lineno, line) in text.lines().enumerate() {
        let loc = || format!("line {}", lineno + 1);
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "v" => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_error(loc(), "vertex needs three coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_error(loc(), format!("bad coordinate `{tok}`")))?;
                }
                positions.push(p);
            }
            "f" => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(parse_error(
                        loc(),
                        format!("only triangles are supported, got {} vertices", refs.len()),
                    ));
                }
                let mut face = [0usize; 3];
                for (slot, tok) in face.iter_mut().zip(&refs) {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_error(loc(), format!("bad index `{tok}`")))?;
                    let resolved = match idx {
                        0 => return Err(parse_error(loc(), "OBJ indices are 1-based")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > positions.len() {
                                return Err(parse_error(loc(), format!("bad index `{tok}`")));
                            }
                            positions.len() - back
                        }
                    };
                    *slot = resolved;
                }
                faces.push(face);
            }
            other => {
                if skipped.insert(other.to_string()) {
                    log::warn!("OBJ: ignoring `{other}` directives");
                }
            }
        }
    }
    Mesh::new(positions, faces)
}

fn write_obj(mesh: &Mesh) -> Vec<u8> {
    let mut out = String::new();
    for p in mesh.positions() {
        let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out.into_bytes()
}

fn write_ply(mesh: &Mesh) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    let _ = writeln!(header, "element vertex {}", mesh.vertex_count());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    for name in mesh.attributes().keys() {
        let _ = writeln!(header, "property float {name}");
    }
    let _ = writeln!(header, "element face {}", mesh.face_count());
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let channels: Vec<&Vec<f64>> = mesh.attributes().values().collect();
    let vertex_stride = 4 * (3 + channels.len());
    let mut out = Vec::with_capacity(
        header.len() + vertex_stride * mesh.vertex_count() + 13 * mesh.face_count(),
    );
    out.extend_from_slice(header.as_bytes());
    for (v, p) in mesh.positions().iter().enumerate() {
        for c in p {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        for ch in &channels {
            out.extend_from_slice(&(ch[v] as f32).to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> MeshResult<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(parse_error(
                format!("byte {}", self.pos),
                "unexpected end of PLY data",
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn scalar(&mut self, ty: Scalar) -> MeshResult<f64> {
        Ok(ty.read(self.take(ty.size())?))
    }
}

fn read_ply(bytes: &[u8]) -> MeshResult<Mesh> {
    const END: &[u8] = b"end_header\n";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| parse_error("header".into(), "missing end_header"))?
        + END.len();
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| parse_error("header".into(), "header is not UTF-8"))?;

    let mut elements: Vec<Element> = Vec::new();
    for (lineno, line) in header.lines().enumerate() {
        let loc = || format!("header line {}", lineno + 1);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["ply"] | ["end_header"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => {
                return Err(parse_error(
                    loc(),
                    format!("unsupported PLY format `{other}`"),
                ))
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_error(loc(), "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(loc(), "property before element"))?;
                let c = Scalar::parse(count_ty).ok_or_else(|| parse_error(loc(), "bad type"))?;
                let i = Scalar::parse(item_ty).ok_or_else(|| parse_error(loc(), "bad type"))?;
                el.properties.push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(loc(), "property before element"))?;
                let t = Scalar::parse(ty).ok_or_else(|| parse_error(loc(), "bad type"))?;
                el.properties.push(Property::Scalar(name.to_string(), t));
            }
            _ => {
                return Err(parse_error(
                    loc(),
                    format!("unrecognized header line `{line}`"),
                ))
            }
        }
    }
    if !header.starts_with("ply\n") {
        return Err(parse_error("header line 1".into(), "missing `ply` magic"));
    }

    let mut cursor = Cursor {
        bytes,
        pos: header_end,
    };
    let mut positions: Vec<Point> = Vec::new();
    let mut attributes: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut faces: Vec<Face> = Vec::new();

    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let mut xyz_slots = [None; 3];
                for (pi, p) in el.properties.iter().enumerate() {
                    match p {
                        Property::Scalar(name, _) => match name.as_str() {
                            "x" => xyz_slots[0] = Some(pi),
                            "y" => xyz_slots[1] = Some(pi),
                            "z" => xyz_slots[2] = Some(pi),
                            other => {
                                attributes.insert(other.to_string(), Vec::with_capacity(el.count));
                            }
                        },
                        Property::List(..) => {
                            return Err(parse_error(
                                "header".into(),
                                "list properties on vertices are not supported",
                            ))
                        }
                    }
                }
                if xyz_slots.iter().any(Option::is_none) {
                    return Err(parse_error("header".into(), "vertex element lacks x/y/z"));
                }
                positions.reserve(el.count);
                let mut row = vec![0.0; el.properties.len()];
                for _ in 0..el.count {
                    for (slot, p) in row.iter_mut().zip(&el.properties) {
                        if let Property::Scalar(_, ty) = p {
                            *slot = cursor.scalar(*ty)?;
                        }
                    }
                    positions.push(xyz_slots.map(|s| row[s.unwrap()]));
                    for (value, p) in row.iter().zip(&el.properties) {
                        if let Property::Scalar(name, _) = p {
                            if let Some(ch) = attributes.get_mut(name) {
                                ch.push(*value);
                            }
                        }
                    }
                }
            }
            "face" => {
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::List(name, count_ty, item_ty)
                                if name == "vertex_indices" || name == "vertex_index" =>
                            {
                                let at = cursor.pos;
                                let n = cursor.scalar(*count_ty)? as usize;
                                if n != 3 {
                                    return Err(parse_error(
                                        format!("byte {at}"),
                                        format!("only triangles are supported, got {n} vertices"),
                                    ));
                                }
                                let mut face = [0usize; 3];
                                for slot in &mut face {
                                    let v = cursor.scalar(*item_ty)?;
                                    if v < 0.0 {
                                        return Err(parse_error(
                                            format!("byte {at}"),
                                            "negative vertex index",
                                        ));
                                    }
                                    *slot = v as usize;
                                }
                                faces.push(face);
                            }
                            Property::List(_, count_ty, item_ty) => {
                                let n = cursor.scalar(*count_ty)? as usize;
                                cursor.take(n * item_ty.size())?;
                            }
                            Property::Scalar(_, ty) => {
                                cursor.take(ty.size())?;
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::Scalar(_, ty) => {
                                cursor.take(ty.size())?;
                            }
                            Property::List(_, count_ty, item_ty) => {
                                let n = cursor.scalar(*count_ty)? as usize;
                                cursor.take(n * item_ty.size())?;
                            }
                        }
                    }
                }
            }
        }
    }
    Mesh::with_attributes(positions, faces, attributes)
}

const STL_HEADER: &[u8] = b"facefill binary STL";

fn write_stl(mesh: &Mesh) -> MeshResult<Vec<u8>> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.face_count());
    let mut header = [0u8; 80];
    header[..STL_HEADER.len()].copy_from_slice(STL_HEADER);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.face_count() as u32).to_le_bytes());
    let p = mesh.positions();
    for (fi, &[a, b, c]) in mesh.faces().iter().enumerate() {
        let n = cross(super::sub(p[b], p[a]), super::sub(p[c], p[a]));
        let len = norm(n);
        if len == 0.0 || !len.is_finite() {
            return Err(MeshError::ZeroAreaFace(fi));
        }
        for x in n.map(|x| x / len) {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        for v in [a, b, c] {
            for x in p[v] {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    Ok(out)
}
