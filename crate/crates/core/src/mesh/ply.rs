//! Minimal PLY reader/writer for triangle meshes.
//!
//! Reads ASCII and binary little-endian files. Binary big-endian is rejected.
//! Unknown elements and properties are parsed and skipped.

use std::io::Write;
use std::path::Path;

use super::{TriMesh, Vec3, DEFAULT_COLOR};
use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
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
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    /// Byte offset of the payload.
    body_start: usize,
    /// Line number (1-based) of the first payload line.
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();

    let next_line = |pos: &mut usize| -> Option<(usize, String)> {
        if *pos >= bytes.len() {
            return None;
        }
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| start + i)
            .unwrap_or(bytes.len());
        *pos = (end + 1).min(bytes.len());
        let text = String::from_utf8_lossy(&bytes[start..end]);
        Some((start, text.trim_end_matches('\r').to_string()))
    };

    match next_line(&mut pos) {
        Some((_, l)) if l.trim() == "ply" => line_no += 1,
        _ => return Err(Error::ply(Location::Line(1), "missing 'ply' magic")),
    }

    loop {
        let Some((_, line)) = next_line(&mut pos) else {
            return Err(Error::ply(Location::Line(line_no + 1), "header ended without end_header"));
        };
        line_no += 1;
        let loc = Location::Line(line_no);
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            None => continue,
            Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                format = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some("binary_big_endian") => {
                        return Err(Error::ply(loc, "binary_big_endian PLY is not supported"))
                    }
                    other => return Err(Error::ply(loc, format!("unknown format {other:?}"))),
                });
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(Error::ply(loc, "malformed element line"));
                }
                let count = toks[2]
                    .parse::<usize>()
                    .map_err(|_| Error::ply(loc, format!("bad element count '{}'", toks[2])))?;
                elements.push(Element {
                    name: toks[1].to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| Error::ply(loc, "property before any element"))?;
                let kind = if toks.get(1) == Some(&"list") {
                    if toks.len() != 5 {
                        return Err(Error::ply(loc, "malformed list property"));
                    }
                    let count = Scalar::parse(toks[2])
                        .ok_or_else(|| Error::ply(loc, format!("unknown type '{}'", toks[2])))?;
                    let item = Scalar::parse(toks[3])
                        .ok_or_else(|| Error::ply(loc, format!("unknown type '{}'", toks[3])))?;
                    if count.is_float() {
                        return Err(Error::ply(loc, "list count type must be an integer"));
                    }
                    PropKind::List { count, item }
                } else {
                    if toks.len() != 3 {
                        return Err(Error::ply(loc, "malformed property line"));
                    }
                    PropKind::Scalar(
                        Scalar::parse(toks[1])
                            .ok_or_else(|| Error::ply(loc, format!("unknown type '{}'", toks[1])))?,
                    )
                };
                elem.props.push(Property {
                    name: toks.last().unwrap().to_string(),
                    kind,
                });
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::ply(loc, format!("unexpected header keyword '{other}'"))),
        }
    }

    let format = format.ok_or_else(|| Error::ply(Location::Line(line_no), "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_start: pos,
        body_line: line_no + 1,
    })
}

/// Source of scalar values for the payload, either ASCII tokens or LE bytes.
trait Body {
    fn begin_record(&mut self) -> Result<()>;
    fn read(&mut self, ty: Scalar) -> Result<f64>;
    fn location(&self) -> Location;
}

struct AsciiBody<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
    line_no: usize,
    tokens: std::vec::IntoIter<&'a str>,
}

impl<'a> Body for AsciiBody<'a> {
    fn begin_record(&mut self) -> Result<()> {
        loop {
            let Some(line) = self.lines.next() else {
                return Err(Error::ply(Location::Line(self.line_no + 1), "truncated payload"));
            };
            self.line_no += 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                self.tokens = toks.into_iter();
                return Ok(());
            }
        }
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        let loc = Location::Line(self.line_no);
        let tok = self
            .tokens
            .next()
            .ok_or_else(|| Error::ply(loc, "too few values in record"))?;
        let bad = || Error::ply(loc, format!("cannot parse '{tok}' as {ty:?}"));
        Ok(match ty {
            Scalar::F32 => tok.parse::<f32>().map_err(|_| bad())? as f64,
            Scalar::F64 => tok.parse::<f64>().map_err(|_| bad())?,
            Scalar::I8 => tok.parse::<i8>().map_err(|_| bad())? as f64,
            Scalar::U8 => tok.parse::<u8>().map_err(|_| bad())? as f64,
            Scalar::I16 => tok.parse::<i16>().map_err(|_| bad())? as f64,
            Scalar::U16 => tok.parse::<u16>().map_err(|_| bad())? as f64,
            Scalar::I32 => tok.parse::<i32>().map_err(|_| bad())? as f64,
            Scalar::U32 => tok.parse::<u32>().map_err(|_| bad())? as f64,
        })
    }

    fn location(&self) -> Location {
        Location::Line(self.line_no)
    }
}

struct BinaryBody<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Body for BinaryBody<'a> {
    fn begin_record(&mut self) -> Result<()> {
        Ok(())
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return Err(Error::ply(Location::Byte(self.pos as u64), "truncated payload"));
        }
        let b = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }

    fn location(&self) -> Location {
        Location::Byte(self.pos as u64)
    }
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes).map_err(|e| e.with_path(path))
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriMesh> {
    let header = parse_header(bytes)?;
    let payload = &bytes[header.body_start..];
    match header.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(payload).map_err(|e| {
                Error::ply(
                    Location::Byte((header.body_start + e.valid_up_to()) as u64),
                    "ASCII payload is not valid UTF-8",
                )
            })?;
            let mut body = AsciiBody {
                lines: text.lines().peekable(),
                line_no: header.body_line - 1,
                tokens: Vec::new().into_iter(),
            };
            read_elements(&header, &mut body)
        }
        PlyFormat::BinaryLittleEndian => {
            let mut body = BinaryBody { bytes, pos: header.body_start };
            read_elements(&header, &mut body)
        }
    }
}

fn read_elements(header: &Header, body: &mut dyn Body) -> Result<TriMesh> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut colors: Option<Vec<Vec3>> = None;
    let mut normals: Option<Vec<Vec3>> = None;
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut saw_vertex = false;

    for elem in &header.elements {
        match elem.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                let find = |n: &str| elem.props.iter().position(|p| p.name == n);
                let xyz = [find("x"), find("y"), find("z")];
                if xyz.iter().any(Option::is_none) {
                    return Err(Error::ply(
                        Location::Line(1),
                        "vertex element lacks x/y/z properties",
                    ));
                }
                let rgb = [find("red"), find("green"), find("blue")];
                let nrm = [find("nx"), find("ny"), find("nz")];
                let has_rgb = rgb.iter().all(Option::is_some);
                let has_nrm = nrm.iter().all(Option::is_some);
                positions.reserve(elem.count);
                if has_rgb {
                    colors = Some(Vec::with_capacity(elem.count));
                }
                if has_nrm {
                    normals = Some(Vec::with_capacity(elem.count));
                }
                let mut values = vec![0.0f64; elem.props.len()];
                for _ in 0..elem.count {
                    body.begin_record()?;
                    for (slot, prop) in values.iter_mut().zip(&elem.props) {
                        *slot = match prop.kind {
                            PropKind::Scalar(ty) => body.read(ty)?,
                            PropKind::List { count, item } => {
                                let n = body.read(count)? as usize;
                                for _ in 0..n {
                                    body.read(item)?;
                                }
                                0.0
                            }
                        };
                    }
                    let get = |i: Option<usize>| values[i.unwrap()];
                    positions.push([get(xyz[0]), get(xyz[1]), get(xyz[2])]);
                    if let Some(c) = colors.as_mut() {
                        let mut rgb_v = [0.0; 3];
                        for (k, idx) in rgb.iter().enumerate() {
                            let p = &elem.props[idx.unwrap()];
                            let raw = values[idx.unwrap()];
                            rgb_v[k] = match p.kind {
                                PropKind::Scalar(ty) if ty.is_float() => raw.clamp(0.0, 1.0),
                                _ => (raw / 255.0).clamp(0.0, 1.0),
                            };
                        }
                        c.push(rgb_v);
                    }
                    if let Some(n) = normals.as_mut() {
                        n.push([get(nrm[0]), get(nrm[1]), get(nrm[2])]);
                    }
                }
            }
            "face" => {
                let list_idx = elem
                    .props
                    .iter()
                    .position(|p| {
                        matches!(p.kind, PropKind::List { .. })
                            && (p.name == "vertex_indices" || p.name == "vertex_index")
                    })
                    .ok_or_else(|| Error::ply(Location::Line(1), "face element lacks vertex_indices"))?;
                faces.reserve(elem.count);
                for fi in 0..elem.count {
                    body.begin_record()?;
                    let mut face = None;
                    for (pi, prop) in elem.props.iter().enumerate() {
                        match prop.kind {
                            PropKind::Scalar(ty) => {
                                body.read(ty)?;
                            }
                            PropKind::List { count, item } => {
                                let loc = body.location();
                                let n = body.read(count)? as usize;
                                let mut idx = Vec::with_capacity(n);
                                for _ in 0..n {
                                    idx.push(body.read(item)?);
                                }
                                if pi == list_idx {
                                    if n != 3 {
                                        return Err(Error::ply(
                                            loc,
                                            format!("face {fi} has {n} vertices; only triangles are supported"),
                                        ));
                                    }
                                    let mut tri = [0u32; 3];
                                    for (t, &raw) in tri.iter_mut().zip(&idx) {
                                        if raw < 0.0 || raw.fract() != 0.0 || raw >= positions.len() as f64 {
                                            return Err(Error::ply(
                                                loc,
                                                format!(
                                                    "face {fi}: vertex index {raw} out of range for {} vertices",
                                                    positions.len()
                                                ),
                                            ));
                                        }
                                        *t = raw as u32;
                                    }
                                    face = Some(tri);
                                }
                            }
                        }
                    }
                    faces.push(face.expect("list property present"));
                }
            }
            _ => {
                for _ in 0..elem.count {
                    body.begin_record()?;
                    for prop in &elem.props {
                        match prop.kind {
                            PropKind::Scalar(ty) => {
                                body.read(ty)?;
                            }
                            PropKind::List { count, item } => {
                                let n = body.read(count)? as usize;
                                for _ in 0..n {
                                    body.read(item)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if !saw_vertex {
        return Err(Error::ply(Location::Line(1), "no vertex element"));
    }
    let n = positions.len();
    let has_colors = colors.is_some();
    let mesh = TriMesh {
        colors: colors.unwrap_or_else(|| vec![DEFAULT_COLOR; n]),
        has_colors,
        normals,
        positions,
        faces,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes positions as `float`, normals (when present) as `float`, colors as
/// `uchar` when `mesh.has_colors`, and faces as `list uchar int`.
pub fn write_ply<W: Write>(mut w: W, mesh: &TriMesh, format: PlyFormat) -> std::io::Result<()> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", mesh.vertex_count());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if mesh.normals.is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if mesh.has_colors {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!(
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.faces.len()
    ));
    w.write_all(header.as_bytes())?;

    match format {
        PlyFormat::Ascii => {
            for i in 0..mesh.vertex_count() {
                let p = mesh.positions[i];
                let mut line = format!("{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32);
                if let Some(n) = &mesh.normals {
                    line.push_str(&format!(" {} {} {}", n[i][0] as f32, n[i][1] as f32, n[i][2] as f32));
                }
                if mesh.has_colors {
                    let c = mesh.colors[i];
                    line.push_str(&format!(" {} {} {}", quantize(c[0]), quantize(c[1]), quantize(c[2])));
                }
                line.push('\n');
                w.write_all(line.as_bytes())?;
            }
            for f in &mesh.faces {
                writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut buf = Vec::with_capacity(mesh.vertex_count() * 27 + mesh.faces.len() * 13);
            for i in 0..mesh.vertex_count() {
                for x in mesh.positions[i] {
                    buf.extend_from_slice(&(x as f32).to_le_bytes());
                }
                if let Some(n) = &mesh.normals {
                    for x in n[i] {
                        buf.extend_from_slice(&(x as f32).to_le_bytes());
                    }
                }
                if mesh.has_colors {
                    buf.extend(mesh.colors[i].iter().map(|&c| quantize(c)));
                }
            }
            for f in &mesh.faces {
                buf.push(3);
                for &i in f {
                    buf.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn save_ply(path: impl AsRef<Path>, mesh: &TriMesh, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_ply(&mut buf, mesh, format).map_err(|e| Error::io(path, e))?;
    crate::io::write_atomic(path, &buf)
}
