//! Plain (P2) PGM export of tri-state maps.
//!
//! Grey levels follow the usual occupancy-map convention: 205 unknown,
//! 254 free, 0 occupied. The first image row is the top of the map
//! (largest `b`). A header comment records the resolution and extents so the
//! grid geometry can be restored on read:
//!
//! ```text
//! P2
//! # slarm delta=0.05 x_max=5 y_max=3.5 origin=-4.975,-3.475
//! 200 140
//! 255
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{CellClass, ClassGrid, GridGeometry, GridIndex};
use crate::error::{Error, Result};

pub const PGM_UNKNOWN: u8 = 205;
pub const PGM_FREE: u8 = 254;
pub const PGM_OCCUPIED: u8 = 0;

const VALUES_PER_LINE: usize = 20;

fn grey(class: CellClass) -> u8 {
    match class {
        CellClass::Unexplored => PGM_UNKNOWN,
        CellClass::Free => PGM_FREE,
        CellClass::Occupied => PGM_OCCUPIED,
    }
}

fn class_of(value: u32) -> CellClass {
    match value {
        v if v < 128 => CellClass::Occupied,
        v if v >= 230 => CellClass::Free,
        _ => CellClass::Unexplored,
    }
}

pub fn pgm_string(map: &ClassGrid) -> String {
    let g = map.geometry();
    let o = g.origin();
    let mut s = String::new();
    let _ = writeln!(s, "P2");
    let _ = writeln!(
        s,
        "# slarm delta={} x_max={} y_max={} origin={},{}",
        g.delta, g.x_max, g.y_max, o.x, o.y
    );
    let _ = writeln!(s, "{} {}", g.width, g.height);
    let _ = writeln!(s, "255");
    for b in (1..=g.height).rev() {
        let row: Vec<String> = (1..=g.width)
            .map(|a| grey(map.cells()[g.linear(GridIndex::new(a, b))]).to_string())
            .collect();
        for chunk in row.chunks(VALUES_PER_LINE) {
            let _ = writeln!(s, "{}", chunk.join(" "));
        }
    }
    s
}

pub fn write_pgm(map: &ClassGrid, path: &Path) -> Result<()> {
    std::fs::write(path, pgm_string(map)).map_err(|e| Error::io(path, e))
}

pub fn parse_pgm(text: &str, context: &str) -> Result<ClassGrid> {
    let mut tokens = Vec::new();
    let mut meta: Option<(f64, f64, f64)> = None;
    for line in text.lines() {
        let (content, comment) = match line.find('#') {
            Some(i) => (&line[..i], Some(&line[i + 1..])),
            None => (line, None),
        };
        if let Some(c) = comment {
            if let Some(m) = parse_meta(c) {
                meta = Some(m);
            }
        }
        tokens.extend(content.split_whitespace());
    }
    let mut it = tokens.into_iter();
    if it.next() != Some("P2") {
        return Err(Error::parse(context, "missing P2 magic"));
    }
    let mut next_num = |what: &str| -> Result<u32> {
        it.next()
            .ok_or_else(|| Error::parse(context, format!("missing {what}")))?
            .parse::<u32>()
            .map_err(|e| Error::parse(context, format!("bad {what}: {e}")))
    };
    let width = next_num("width")? as usize;
    let height = next_num("height")? as usize;
    let _maxval = next_num("maxval")?;
    let (delta, x_max, y_max) = meta.ok_or_else(|| {
        Error::parse(context, "missing '# slarm delta=.. x_max=.. y_max=..' header")
    })?;
    let geom = GridGeometry::new(x_max, y_max, delta)?;
    if geom.width != width || geom.height != height {
        return Err(Error::DimensionMismatch(format!(
            "{context}: header says {width}x{height}, metadata implies {}x{}",
            geom.width, geom.height
        )));
    }
    let mut cells = vec![CellClass::Unexplored; width * height];
    for row in 0..height {
        let b = height - row;
        for a in 1..=width {
            let v = next_num("pixel")?;
            cells[geom.linear(GridIndex::new(a, b))] = class_of(v);
        }
    }
    ClassGrid::from_cells(geom, cells)
}

fn parse_meta(comment: &str) -> Option<(f64, f64, f64)> {
    let mut delta = None;
    let mut x_max = None;
    let mut y_max = None;
    let mut words = comment.split_whitespace();
    if words.next() != Some("slarm") {
        return None;
    }
    for w in words {
        if let Some((k, v)) = w.split_once('=') {
            match k {
                "delta" => delta = v.parse().ok(),
                "x_max" => x_max = v.parse().ok(),
                "y_max" => y_max = v.parse().ok(),
                _ => {}
            }
        }
    }
    Some((delta?, x_max?, y_max?))
}

pub fn read_pgm(path: &Path) -> Result<ClassGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&text, &path.display().to_string())
}
