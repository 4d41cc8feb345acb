//! Mesh readers (OBJ, ASCII/binary PLY, ASCII/binary STL) and an OBJ writer.

use std::io::{Read, Write};

use super::{MeshError, TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Ply,
    Stl,
}

impl MeshFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(Self::Obj),
            "ply" => Some(Self::Ply),
            "stl" => Some(Self::Stl),
            _ => None,
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

/// Where in the input a parse error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Offset(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Offset(o) => write!(f, "byte offset {o}"),
        }
    }
}

/// Reads and cleans a mesh, scaling every coordinate by `scale`.
pub fn load_mesh<R: Read>(
    mut source: R,
    format: MeshFormat,
    scale: f64,
) -> Result<TriangleMesh, MeshError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (mut vertices, triangles) = match format {
        MeshFormat::Obj => parse_obj(&bytes)?,
        MeshFormat::Ply => parse_ply(&bytes)?,
        MeshFormat::Stl => parse_stl(&bytes)?,
    };
    if vertices.is_empty() || triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    if scale != 1.0 {
        vertices.iter_mut().for_each(|v| *v *= scale);
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn load_mesh_file(path: &std::path::Path, scale: f64) -> Result<TriangleMesh, MeshError> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| MeshError::UnknownFormat(path.display().to_string()))?;
    let file = std::fs::File::open(path)?;
    load_mesh(std::io::BufReader::new(file), format, scale)
}

/// Writes `v`/`f` records (1-based indices).
pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut out: W) -> std::io::Result<()> {
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    out.flush()
}

fn format_error(format: MeshFormat, location: Location, message: impl Into<String>) -> MeshError {
    MeshError::Format {
        format: format.name(),
        location,
        message: message.into(),
    }
}

type RawMesh = (Vec<Vec3>, Vec<[u32; 3]>);

fn parse_obj(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        format_error(
            MeshFormat::Obj,
            Location::Offset(e.valid_up_to()),
            "invalid UTF-8",
        )
    })?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |m: &str| format_error(MeshFormat::Obj, Location::Line(line_no), m);
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("malformed vertex coordinate"))?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in tokens {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| err("malformed face index"))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(err("face index 0 is invalid"));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err("face index out of range"));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(err("face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

fn parse_stl(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let looks_binary = bytes.len() >= 84 && {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        bytes.len() == 84 + 50 * n
    };
    if looks_binary || !bytes.trim_ascii_start().starts_with(b"solid") {
        parse_stl_binary(bytes)
    } else {
        parse_stl_ascii(bytes)
    }
}

fn parse_stl_binary(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    if bytes.len() < 84 {
        return Err(format_error(
            MeshFormat::Stl,
            Location::Offset(bytes.len()),
            "truncated header",
        ));
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    if bytes.len() < 84 + 50 * n {
        return Err(format_error(
            MeshFormat::Stl,
            Location::Offset(bytes.len()),
            format!("expected {n} facets"),
        ));
    }
    let mut vertices = Vec::with_capacity(3 * n);
    let mut triangles = Vec::with_capacity(n);
    for f in 0..n {
        let base = 84 + 50 * f + 12;
        for k in 0..3 {
            let o = base + 12 * k;
            let c = |j: usize| {
                f32::from_le_bytes(bytes[o + 4 * j..o + 4 * j + 4].try_into().unwrap()) as f64
            };
            vertices.push(Vec3::new(c(0), c(1), c(2)));
        }
        let b = (3 * f) as u32;
        triangles.push([b, b + 1, b + 2]);
    }
    Ok((vertices, triangles))
}

fn parse_stl_ascii(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        format_error(
            MeshFormat::Stl,
            Location::Offset(e.valid_up_to()),
            "invalid UTF-8",
        )
    })?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut pending: Vec<u32> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |m: &str| format_error(MeshFormat::Stl, Location::Line(line_no), m);
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("vertex") => {
                let c: Vec<f64> = tokens
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("malformed vertex coordinate"))?;
                if c.len() != 3 {
                    return Err(err("vertex needs three coordinates"));
                }
                pending.push(vertices.len() as u32);
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("endloop") => {
                if pending.len() != 3 {
                    return Err(err("facet loop must have exactly three vertices"));
                }
                triangles.push([pending[0], pending[1], pending[2]]);
                pending.clear();
            }
            Some("solid" | "facet" | "outer" | "endfacet" | "endsolid") | None => {}
            Some(other) => return Err(err(&format!("unexpected keyword `{other}`"))),
        }
    }
    Ok((vertices, triangles))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn decode(self, b: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().unwrap();
                (if big_endian {
                    <$t>::from_be_bytes(arr)
                } else {
                    <$t>::from_le_bytes(arr)
                }) as f64
            }};
        }
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => num!(i16, 2),
            Self::U16 => num!(u16, 2),
            Self::I32 => num!(i32, 4),
            Self::U32 => num!(u32, 4),
            Self::F32 => num!(f32, 4),
            Self::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar {
        name: String,
        ty: PlyType,
    },
    List {
        name: String,
        count: PlyType,
        item: PlyType,
    },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

fn parse_ply(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let err = |loc: Location, m: &str| format_error(MeshFormat::Ply, loc, m);

    // header is ASCII lines up to "end_header"
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut encoding = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| err(Location::Offset(pos), "unterminated header"))?;
        line_no += 1;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| err(Location::Line(line_no), "non-ASCII header"))?
            .trim();
        pos = end + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err(Location::Line(1), "missing `ply` magic"));
            }
            continue;
        }
        match tokens.first().copied() {
            Some("format") => {
                encoding = Some(match tokens.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLe,
                    Some("binary_big_endian") => PlyEncoding::BinaryBe,
                    _ => return Err(err(Location::Line(line_no), "unknown format")),
                });
            }
            Some("element") => {
                let (name, count) =
                    match (tokens.get(1), tokens.get(2).and_then(|c| c.parse().ok())) {
                        (Some(n), Some(c)) => (n.to_string(), c),
                        _ => return Err(err(Location::Line(line_no), "malformed element line")),
                    };
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(Location::Line(line_no), "property before element"))?;
                let prop = if tokens.get(1) == Some(&"list") {
                    match (
                        tokens.get(2).and_then(|t| PlyType::parse(t)),
                        tokens.get(3).and_then(|t| PlyType::parse(t)),
                        tokens.get(4),
                    ) {
                        (Some(count), Some(item), Some(name)) => PlyProperty::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(err(Location::Line(line_no), "malformed list property")),
                    }
                } else {
                    match (tokens.get(1).and_then(|t| PlyType::parse(t)), tokens.get(2)) {
                        (Some(ty), Some(name)) => PlyProperty::Scalar {
                            name: name.to_string(),
                            ty,
                        },
                        _ => return Err(err(Location::Line(line_no), "malformed property")),
                    }
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some("comment" | "obj_info") | None => {}
            Some(_) => return Err(err(Location::Line(line_no), "unexpected header line")),
        }
    }
    let encoding = encoding.ok_or_else(|| err(Location::Line(line_no), "missing format line"))?;

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut reader = PlyBody::new(bytes, pos, line_no, encoding);
    for el in &elements {
        let xyz: Option<[usize; 3]> = if el.name == "vertex" {
            let find = |n: &str| {
                el.properties
                    .iter()
                    .position(|p| matches!(p, PlyProperty::Scalar { name, .. } if name == n))
            };
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(err(Location::Line(line_no), "vertex element lacks x/y/z")),
            }
        } else {
            None
        };
        for _ in 0..el.count {
            reader.begin_record()?;
            let mut coords = [0.0; 3];
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    PlyProperty::Scalar { ty, .. } => {
                        let v = reader.value(*ty)?;
                        if let Some(xyz) = xyz {
                            if let Some(k) = xyz.iter().position(|&i| i == pi) {
                                coords[k] = v;
                            }
                        }
                    }
                    PlyProperty::List { name, count, item } => {
                        let n = reader.value(*count)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(reader.error("invalid list length"));
                        }
                        let items: Vec<f64> = (0..n as usize)
                            .map(|_| reader.value(*item))
                            .collect::<Result<_, _>>()?;
                        let is_face_list = el.name == "face"
                            && (name == "vertex_indices" || name == "vertex_index");
                        if is_face_list {
                            if items.len() < 3 {
                                return Err(reader.error("face needs at least three vertices"));
                            }
                            for k in 1..items.len() - 1 {
                                triangles.push([
                                    items[0] as u32,
                                    items[k] as u32,
                                    items[k + 1] as u32,
                                ]);
                            }
                        }
                    }
                }
            }
            reader.end_record()?;
            if xyz.is_some() {
                vertices.push(Vec3::from(coords));
            }
        }
    }
    if let Some(t) = triangles
        .iter()
        .find(|t| t.iter().any(|&i| i as usize >= vertices.len()))
    {
        return Err(err(
            Location::Line(line_no),
            &format!("face index out of range in {t:?}"),
        ));
    }
    Ok((vertices, triangles))
}

/// Cursor over a PLY body in either encoding.
struct PlyBody<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    encoding: PlyEncoding,
    tokens: std::vec::IntoIter<&'a str>,
}

impl<'a> PlyBody<'a> {
    fn new(bytes: &'a [u8], pos: usize, header_lines: usize, encoding: PlyEncoding) -> Self {
        Self {
            bytes,
            pos,
            line: header_lines,
            encoding,
            tokens: Vec::new().into_iter(),
        }
    }

    fn error(&self, message: &str) -> MeshError {
        let loc = match self.encoding {
            PlyEncoding::Ascii => Location::Line(self.line),
            _ => Location::Offset(self.pos),
        };
        format_error(MeshFormat::Ply, loc, message)
    }

    fn begin_record(&mut self) -> Result<(), MeshError> {
        if self.encoding != PlyEncoding::Ascii {
            return Ok(());
        }
        loop {
            if self.pos >= self.bytes.len() {
                self.line += 1;
                return Err(self.error("unexpected end of data"));
            }
            let end = self.bytes[self.pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|i| self.pos + i)
                .unwrap_or(self.bytes.len());
            self.line += 1;
            let line = std::str::from_utf8(&self.bytes[self.pos..end])
                .map_err(|_| self.error("invalid UTF-8"))?;
            self.pos = (end + 1).min(self.bytes.len());
            let tokens: Vec<&'a str> = line.split_whitespace().collect();
            if !tokens.is_empty() {
                self.tokens = tokens.into_iter();
                return Ok(());
            }
        }
    }

    fn end_record(&mut self) -> Result<(), MeshError> {
        if self.encoding == PlyEncoding::Ascii && self.tokens.len() > 0 {
            return Err(self.error("trailing values in record"));
        }
        Ok(())
    }

    fn value(&mut self, ty: PlyType) -> Result<f64, MeshError> {
        match self.encoding {
            PlyEncoding::Ascii => {
                let tok = self
                    .tokens
                    .next()
                    .ok_or_else(|| self.error("missing value"))?;
                tok.parse::<f64>()
                    .map_err(|_| self.error("malformed number"))
            }
            enc => {
                let n = ty.size();
                if self.pos + n > self.bytes.len() {
                    return Err(self.error("unexpected end of data"));
                }
                let v = ty.decode(&self.bytes[self.pos..], enc == PlyEncoding::BinaryBe);
                self.pos += n;
                Ok(v)
            }
        }
    }
}
