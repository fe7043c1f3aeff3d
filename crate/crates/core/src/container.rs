//! Sectioned text container shared by every on-disk format.
//!
//! A container file starts with a versioned magic line `HANDKIT <format> v1`
//! followed by named sections. Each section opens with a header line
//! `SECTION <name> <rows> <cols>` and carries `rows * cols` whitespace
//! separated decimal values. Section names may contain spaces (e.g.
//! `SHAPE_BASIS 3`); the last two header tokens are always the dimensions.
//!
//! Floating point values are serialized with 17 significant digits so that
//! every finite `f64` round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC_PREFIX: &str = "HANDKIT";
pub const FORMAT_VERSION: &str = "v1";

/// One named block of `rows * cols` values, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Section {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, values: Vec<f64>) -> Self {
        let section = Section {
            name: name.into(),
            rows,
            cols,
            values,
        };
        debug_assert_eq!(section.rows * section.cols, section.values.len());
        section
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Reads a value that must be an integer (faces, tree indices, counts).
    pub fn integer(&self, row: usize, col: usize) -> Result<i64> {
        let v = self.value(row, col);
        if v.fract() != 0.0 || !v.is_finite() || v.abs() > 2f64.powi(53) {
            return Err(Error::InvalidArgument(format!(
                "section {}: value at ({row},{col}) is not an integer: {v}",
                self.name
            )));
        }
        Ok(v as i64)
    }
}

/// A parsed or to-be-written container: format tag plus ordered sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub format: String,
    pub sections: Vec<Section>,
}

impl Container {
    pub fn new(format: impl Into<String>) -> Self {
        Container {
            format: format.into(),
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing section {name}"),
            })
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s.name == name)
    }

    /// Sections whose name starts with `prefix` followed by a space.
    pub fn sections_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Section> {
        self.sections
            .iter()
            .filter(move |s| s.name.strip_prefix(prefix).is_some_and(|r| r.starts_with(' ')))
    }

    pub fn expect_format(&self, format: &str) -> Result<()> {
        if self.format != format {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected format {format}, found {}", self.format),
            });
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC_PREFIX} {} {FORMAT_VERSION}", self.format);
        for section in &self.sections {
            let _ = writeln!(
                out,
                "SECTION {} {} {}",
                section.name, section.rows, section.cols
            );
            for row in 0..section.rows {
                let mut line = String::new();
                for col in 0..section.cols {
                    if col > 0 {
                        line.push(' ');
                    }
                    line.push_str(&format_value(section.value(row, col)));
                }
                let _ = writeln!(out, "{line}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, magic) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let format = parse_magic(magic)?;
        let mut container = Container::new(format);

        let mut pending: Option<(Section, usize)> = None;
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("SECTION ") {
                if let Some((section, filled)) = pending.take() {
                    if filled != section.rows * section.cols {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!(
                                "section {} truncated: {} of {} values",
                                section.name,
                                filled,
                                section.rows * section.cols
                            ),
                        });
                    }
                    container.push(section);
                }
                pending = Some((parse_section_header(rest, line_no)?, 0));
                continue;
            }
            let Some((section, filled)) = pending.as_mut() else {
                return Err(Error::Parse {
                    line: line_no,
                    message: "values before any SECTION header".into(),
                });
            };
            let total = section.rows * section.cols;
            for token in line.split_ascii_whitespace() {
                if *filled == total {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("section {} has too many values", section.name),
                    });
                }
                let v: f64 = token.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid number: {token}"),
                })?;
                section.values.push(v);
                *filled += 1;
            }
        }
        if let Some((section, filled)) = pending.take() {
            if filled != section.rows * section.cols {
                return Err(Error::Parse {
                    line: text.lines().count(),
                    message: format!(
                        "section {} truncated: {} of {} values",
                        section.name,
                        filled,
                        section.rows * section.cols
                    ),
                });
            }
            container.push(section);
        }
        Ok(container)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

fn parse_magic(line: &str) -> Result<String> {
    let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
    if tokens.len() != 3 || tokens[0] != MAGIC_PREFIX || tokens[2] != FORMAT_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("bad magic line: {line:?}"),
        });
    }
    Ok(tokens[1].to_string())
}

fn parse_section_header(rest: &str, line_no: usize) -> Result<Section> {
    let tokens: Vec<&str> = rest.split_ascii_whitespace().collect();
    if tokens.len() < 3 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("bad section header: SECTION {rest}"),
        });
    }
    let cols: usize = tokens[tokens.len() - 1].parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("bad column count in: SECTION {rest}"),
    })?;
    let rows: usize = tokens[tokens.len() - 2].parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("bad row count in: SECTION {rest}"),
    })?;
    let name = tokens[..tokens.len() - 2].join(" ");
    Ok(Section {
        name,
        rows,
        cols,
        values: Vec::with_capacity(rows * cols),
    })
}

/// Serializes a value with 17 significant digits; integers print exactly.
pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 2f64.powi(53) {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}
