//! Minimal PLY reader/writer: ASCII and binary little-endian, scalar and
//! list properties. Values are held as f64, which preserves every scalar
//! type we emit (float, double, int, uchar) bit-for-bit through round trips.

use crate::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    Char,
    UChar,
    Short,
    UShort,
    Int,
    UInt,
    Float,
    Double,
}

impl ScalarType {
    fn parse(s: &str) -> Option<ScalarType> {
        Some(match s {
            "char" | "int8" => ScalarType::Char,
            "uchar" | "uint8" => ScalarType::UChar,
            "short" | "int16" => ScalarType::Short,
            "ushort" | "uint16" => ScalarType::UShort,
            "int" | "int32" => ScalarType::Int,
            "uint" | "uint32" => ScalarType::UInt,
            "float" | "float32" => ScalarType::Float,
            "double" | "float64" => ScalarType::Double,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarType::Char => "char",
            ScalarType::UChar => "uchar",
            ScalarType::Short => "short",
            ScalarType::UShort => "ushort",
            ScalarType::Int => "int",
            ScalarType::UInt => "uint",
            ScalarType::Float => "float",
            ScalarType::Double => "double",
        }
    }

    fn read_binary(self, r: &mut impl Read) -> std::io::Result<f64> {
        Ok(match self {
            ScalarType::Char => r.read_i8()? as f64,
            ScalarType::UChar => r.read_u8()? as f64,
            ScalarType::Short => r.read_i16::<LittleEndian>()? as f64,
            ScalarType::UShort => r.read_u16::<LittleEndian>()? as f64,
            ScalarType::Int => r.read_i32::<LittleEndian>()? as f64,
            ScalarType::UInt => r.read_u32::<LittleEndian>()? as f64,
            ScalarType::Float => r.read_f32::<LittleEndian>()? as f64,
            ScalarType::Double => r.read_f64::<LittleEndian>()?,
        })
    }

    fn write_binary(self, w: &mut impl Write, v: f64) -> std::io::Result<()> {
        match self {
            ScalarType::Char => w.write_i8(v as i8),
            ScalarType::UChar => w.write_u8(v as u8),
            ScalarType::Short => w.write_i16::<LittleEndian>(v as i16),
            ScalarType::UShort => w.write_u16::<LittleEndian>(v as u16),
            ScalarType::Int => w.write_i32::<LittleEndian>(v as i32),
            ScalarType::UInt => w.write_u32::<LittleEndian>(v as u32),
            ScalarType::Float => w.write_f32::<LittleEndian>(v as f32),
            ScalarType::Double => w.write_f64::<LittleEndian>(v),
        }
    }

    fn parse_ascii(self, tok: &str) -> Option<f64> {
        match self {
            ScalarType::Float | ScalarType::Double => tok.parse::<f64>().ok(),
            _ => tok.parse::<i64>().ok().map(|v| v as f64),
        }
    }

    fn format_ascii(self, v: f64) -> String {
        match self {
            ScalarType::Float | ScalarType::Double => format!("{v}"),
            _ => format!("{}", v as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Scalar(ScalarType, Vec<f64>),
    List(ScalarType, ScalarType, Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub column: Column,
}

impl Property {
    pub fn scalar(name: &str, ty: ScalarType, values: Vec<f64>) -> Property {
        Property { name: name.to_string(), column: Column::Scalar(ty, values) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub count: usize,
    pub properties: Vec<Property>,
}

impl Element {
    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn scalar_column(&self, name: &str) -> Option<&[f64]> {
        match self.property(name).map(|p| &p.column) {
            Some(Column::Scalar(_, v)) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ply {
    pub format: Format,
    pub elements: Vec<Element>,
}

impl Ply {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

struct HeaderProp {
    name: String,
    list: Option<(ScalarType, ScalarType)>,
    scalar: ScalarType,
}

pub fn read_ply(path: &Path) -> Result<Ply> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    read_ply_from(&mut reader, path)
}

pub fn read_ply_from(reader: &mut impl BufRead, path: &Path) -> Result<Ply> {
    let bad = |msg: String| Error::format(path, msg);

    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if line.trim_end() != "ply" {
        return Err(bad("missing ply magic".into()));
    }

    let mut format = None;
    let mut schema: Vec<(String, usize, Vec<HeaderProp>)> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(bad("unexpected end of header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                format = Some(match toks.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some(other) => return Err(bad(format!("unsupported format {other}"))),
                    None => return Err(bad("malformed format line".into())),
                });
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(bad("malformed element line".into()));
                }
                let count: usize = toks[2]
                    .parse()
                    .map_err(|_| bad(format!("bad element count {}", toks[2])))?;
                schema.push((toks[1].to_string(), count, Vec::new()));
            }
            Some("property") => {
                let el = schema
                    .last_mut()
                    .ok_or_else(|| bad("property before any element".into()))?;
                if toks.get(1) == Some(&"list") {
                    if toks.len() != 5 {
                        return Err(bad("malformed list property".into()));
                    }
                    let count_ty = ScalarType::parse(toks[2])
                        .ok_or_else(|| bad(format!("unknown type {}", toks[2])))?;
                    let item_ty = ScalarType::parse(toks[3])
                        .ok_or_else(|| bad(format!("unknown type {}", toks[3])))?;
                    el.2.push(HeaderProp {
                        name: toks[4].to_string(),
                        list: Some((count_ty, item_ty)),
                        scalar: item_ty,
                    });
                } else {
                    if toks.len() != 3 {
                        return Err(bad("malformed property line".into()));
                    }
                    let ty = ScalarType::parse(toks[1])
                        .ok_or_else(|| bad(format!("unknown type {}", toks[1])))?;
                    el.2.push(HeaderProp { name: toks[2].to_string(), list: None, scalar: ty });
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(bad(format!("unknown header keyword {other}"))),
        }
    }
    let format = format.ok_or_else(|| bad("header missing format line".into()))?;

    let mut elements = Vec::new();
    match format {
        Format::Ascii => {
            let mut tokens: Vec<String> = Vec::new();
            for l in reader.lines() {
                let l = l.map_err(|e| Error::io(path, e))?;
                tokens.extend(l.split_whitespace().map(str::to_string));
            }
            let mut pos = 0;
            let mut next = |ty: ScalarType| -> Result<f64> {
                let tok = tokens
                    .get(pos)
                    .ok_or_else(|| Error::format(path, "unexpected end of data"))?;
                pos += 1;
                ty.parse_ascii(tok)
                    .ok_or_else(|| Error::format(path, format!("bad value {tok}")))
            };
            for (name, count, props) in &schema {
                let mut cols: Vec<Column> = props
                    .iter()
                    .map(|p| match p.list {
                        Some((c, i)) => Column::List(c, i, Vec::with_capacity(*count)),
                        None => Column::Scalar(p.scalar, Vec::with_capacity(*count)),
                    })
                    .collect();
                for _ in 0..*count {
                    for col in cols.iter_mut() {
                        match col {
                            Column::Scalar(ty, v) => v.push(next(*ty)?),
                            Column::List(cty, ity, v) => {
                                let n = next(*cty)? as usize;
                                let mut items = Vec::with_capacity(n);
                                for _ in 0..n {
                                    items.push(next(*ity)?);
                                }
                                v.push(items);
                            }
                        }
                    }
                }
                elements.push(assemble(name, *count, props, cols));
            }
        }
        Format::BinaryLittleEndian => {
            for (name, count, props) in &schema {
                let mut cols: Vec<Column> = props
                    .iter()
                    .map(|p| match p.list {
                        Some((c, i)) => Column::List(c, i, Vec::with_capacity(*count)),
                        None => Column::Scalar(p.scalar, Vec::with_capacity(*count)),
                    })
                    .collect();
                for _ in 0..*count {
                    for col in cols.iter_mut() {
                        match col {
                            Column::Scalar(ty, v) => {
                                v.push(ty.read_binary(reader).map_err(|e| Error::io(path, e))?)
                            }
                            Column::List(cty, ity, v) => {
                                let n = cty.read_binary(reader).map_err(|e| Error::io(path, e))?
                                    as usize;
                                let mut items = Vec::with_capacity(n);
                                for _ in 0..n {
                                    items.push(
                                        ity.read_binary(reader).map_err(|e| Error::io(path, e))?,
                                    );
                                }
                                v.push(items);
                            }
                        }
                    }
                }
                elements.push(assemble(name, *count, props, cols));
            }
        }
    }
    Ok(Ply { format, elements })
}

fn assemble(name: &str, count: usize, props: &[HeaderProp], cols: Vec<Column>) -> Element {
    Element {
        name: name.to_string(),
        count,
        properties: props
            .iter()
            .zip(cols)
            .map(|(p, column)| Property { name: p.name.clone(), column })
            .collect(),
    }
}

pub fn write_ply(path: &Path, ply: &Ply) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply_to(&mut w, ply, path)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ply_to(w: &mut impl Write, ply: &Ply, path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io(PathBuf::from(path), e);
    let mut header = String::from("ply\n");
    header.push_str(match ply.format {
        Format::Ascii => "format ascii 1.0\n",
        Format::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for el in &ply.elements {
        header.push_str(&format!("element {} {}\n", el.name, el.count));
        for prop in &el.properties {
            match &prop.column {
                Column::Scalar(ty, v) => {
                    assert_eq!(v.len(), el.count, "column length mismatch in {}", prop.name);
                    header.push_str(&format!("property {} {}\n", ty.name(), prop.name));
                }
                Column::List(cty, ity, v) => {
                    assert_eq!(v.len(), el.count, "column length mismatch in {}", prop.name);
                    header.push_str(&format!(
                        "property list {} {} {}\n",
                        cty.name(),
                        ity.name(),
                        prop.name
                    ));
                }
            }
        }
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes()).map_err(io_err)?;

    for el in &ply.elements {
        for row in 0..el.count {
            match ply.format {
                Format::Ascii => {
                    let mut toks: Vec<String> = Vec::new();
                    for prop in &el.properties {
                        match &prop.column {
                            Column::Scalar(ty, v) => toks.push(ty.format_ascii(v[row])),
                            Column::List(cty, ity, v) => {
                                toks.push(cty.format_ascii(v[row].len() as f64));
                                toks.extend(v[row].iter().map(|x| ity.format_ascii(*x)));
                            }
                        }
                    }
                    writeln!(w, "{}", toks.join(" ")).map_err(io_err)?;
                }
                Format::BinaryLittleEndian => {
                    for prop in &el.properties {
                        match &prop.column {
                            Column::Scalar(ty, v) => {
                                ty.write_binary(w, v[row]).map_err(io_err)?
                            }
                            Column::List(cty, ity, v) => {
                                cty.write_binary(w, v[row].len() as f64).map_err(io_err)?;
                                for x in &v[row] {
                                    ity.write_binary(w, *x).map_err(io_err)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_ply(format: Format) -> Ply {
        Ply {
            format,
            elements: vec![
                Element {
                    name: "vertex".into(),
                    count: 3,
                    properties: vec![
                        Property::scalar("x", ScalarType::Float, vec![0.0, 1.0, 0.25]),
                        Property::scalar("y", ScalarType::Float, vec![0.5, -1.0, 2.0]),
                        Property::scalar("flag", ScalarType::UChar, vec![0.0, 1.0, 255.0]),
                    ],
                },
                Element {
                    name: "face".into(),
                    count: 1,
                    properties: vec![Property {
                        name: "vertex_indices".into(),
                        column: Column::List(
                            ScalarType::UChar,
                            ScalarType::Int,
                            vec![vec![0.0, 1.0, 2.0]],
                        ),
                    }],
                },
            ],
        }
    }

    #[test]
    fn binary_round_trip_is_bitwise_identical() {
        let ply = sample_ply(Format::BinaryLittleEndian);
        let path = Path::new("mem.ply");
        let mut buf1 = Vec::new();
        write_ply_to(&mut buf1, &ply, path).unwrap();
        let parsed = read_ply_from(&mut Cursor::new(&buf1), path).unwrap();
        assert_eq!(parsed, ply);
        let mut buf2 = Vec::new();
        write_ply_to(&mut buf2, &parsed, path).unwrap();
        assert_eq!(buf1, buf2);
    }

    #[test]
    fn ascii_round_trip_preserves_values() {
        let ply = sample_ply(Format::Ascii);
        let path = Path::new("mem.ply");
        let mut buf = Vec::new();
        write_ply_to(&mut buf, &ply, path).unwrap();
        let parsed = read_ply_from(&mut Cursor::new(&buf), path).unwrap();
        assert_eq!(parsed, ply);
    }

    #[test]
    fn parses_type_aliases_and_comments() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\n\
                    property float32 x\nproperty uint8 tag\nend_header\n1.5 7\n-2 9\n";
        let ply = read_ply_from(&mut Cursor::new(text.as_bytes()), Path::new("t.ply")).unwrap();
        let v = ply.element("vertex").unwrap();
        assert_eq!(v.scalar_column("x").unwrap(), &[1.5, -2.0]);
        assert_eq!(v.scalar_column("tag").unwrap(), &[7.0, 9.0]);
    }

    #[test]
    fn rejects_big_endian_and_garbage() {
        let be = "ply\nformat binary_big_endian 1.0\nend_header\n";
        assert!(read_ply_from(&mut Cursor::new(be.as_bytes()), Path::new("t.ply")).is_err());
        let junk = "not a ply\n";
        assert!(read_ply_from(&mut Cursor::new(junk.as_bytes()), Path::new("t.ply")).is_err());
        let trunc = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1.0\n";
        assert!(read_ply_from(&mut Cursor::new(trunc.as_bytes()), Path::new("t.ply")).is_err());
    }
}
