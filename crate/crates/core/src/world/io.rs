//! Versioned key-value text format, one file per floorplan:
//!
//! ```text
//! objnav-floorplan 1
//! id kitchen_000
//! room_type Kitchen
//! grid 12 12
//! cell_size 0.25
//! split train
//! objects 14
//! Fridge 0.5 0.25 0.5 0.5
//! ...
//! ```
//!
//! Object lines are `class_name x y w d` in meters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Floorplan, ObjectInstance, Split};
use crate::catalog::{Catalog, RoomType};
use crate::error::{Error, Result};

const MAGIC: &str = "objnav-floorplan";
const VERSION: u32 = 1;

pub fn write_floorplan(fp: &Floorplan, catalog: &Catalog) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "id {}", fp.id);
    let _ = writeln!(s, "room_type {}", fp.room_type.name());
    let _ = writeln!(s, "grid {} {}", fp.rows, fp.cols);
    let _ = writeln!(s, "cell_size {}", fp.cell_size);
    let _ = writeln!(s, "split {}", fp.split.name());
    let _ = writeln!(s, "objects {}", fp.objects.len());
    for o in &fp.objects {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            catalog.name(o.class),
            o.position.0,
            o.position.1,
            o.footprint.0,
            o.footprint.1
        );
    }
    s
}

pub fn save_floorplan(fp: &Floorplan, catalog: &Catalog, path: &Path) -> Result<()> {
    fs::write(path, write_floorplan(fp, catalog))?;
    Ok(())
}

pub fn parse_floorplan(text: &str, source: &str, catalog: &Catalog) -> Result<Floorplan> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut next = |key: &str| -> Result<(usize, Vec<&str>)> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 0, format!("missing `{key}`")))?;
        let mut parts = line.split_whitespace();
        let k = parts.next().unwrap_or_default();
        if k != key {
            return Err(Error::parse(source, n, format!("expected `{key}`, found `{k}`")));
        }
        Ok((n, parts.collect()))
    };

    let (n, v) = next(MAGIC)?;
    if v.first().and_then(|s| s.parse::<u32>().ok()) != Some(VERSION) {
        return Err(Error::parse(source, n, format!("unsupported version {v:?}")));
    }
    let (n, v) = next("id")?;
    let id = v.first().ok_or_else(|| Error::parse(source, n, "empty id"))?.to_string();
    let (n, v) = next("room_type")?;
    let room: RoomType = v
        .first()
        .ok_or_else(|| Error::parse(source, n, "empty room_type"))?
        .parse()
        .map_err(|e: Error| Error::parse(source, n, e.to_string()))?;
    let (n, v) = next("grid")?;
    let dims: Vec<usize> = v
        .iter()
        .map(|s| s.parse().map_err(|_| Error::parse(source, n, "bad grid dims")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::parse(source, n, "grid needs two dimensions"));
    }
    let (n, v) = next("cell_size")?;
    let cell_size: f64 = number(&v, 0, source, n)?;
    let (n, v) = next("split")?;
    let split: Split = v
        .first()
        .ok_or_else(|| Error::parse(source, n, "empty split"))?
        .parse()
        .map_err(|e: Error| Error::parse(source, n, e.to_string()))?;
    let (n, v) = next("objects")?;
    let count: usize = v
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(source, n, "bad object count"))?;

    let mut objects = Vec::with_capacity(count);
    for (n, line) in lines.by_ref() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(Error::parse(source, n, "object line needs `class x y w d`"));
        }
        let class = catalog
            .lookup(parts[0])
            .ok_or_else(|| Error::parse(source, n, format!("unknown class {}", parts[0])))?;
        objects.push(ObjectInstance {
            class,
            position: (number(&parts, 1, source, n)?, number(&parts, 2, source, n)?),
            footprint: (number(&parts, 3, source, n)?, number(&parts, 4, source, n)?),
        });
    }
    if objects.len() != count {
        return Err(Error::parse(
            source,
            0,
            format!("header declares {count} objects, found {}", objects.len()),
        ));
    }
    Floorplan::new(id, room, (dims[0], dims[1]), cell_size, objects, split, catalog)
}

fn number(parts: &[&str], i: usize, source: &str, line: usize) -> Result<f64> {
    parts
        .get(i)
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::parse(source, line, format!("field {i} is not a finite number")))
}

pub fn load_floorplan(path: &Path, catalog: &Catalog) -> Result<Floorplan> {
    let text = fs::read_to_string(path)?;
    parse_floorplan(&text, &path.display().to_string(), catalog)
}

/// Loads every `*.fp` file in `dir`, sorted by file name.
pub fn load_floorplan_dir(dir: &Path, catalog: &Catalog) -> Result<Vec<Floorplan>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "fp"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_floorplan(p, catalog)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_floorplan, WorldConfig};

    #[test]
    fn text_round_trip_is_exact() {
        let cat = Catalog::standard();
        let fp = generate_floorplan(3, RoomType::Bedroom, &WorldConfig::default(), &cat).unwrap();
        let text = write_floorplan(&fp, &cat);
        assert!(text.starts_with("objnav-floorplan 1\n"));
        let back = parse_floorplan(&text, "mem", &cat).unwrap();
        assert_eq!(back, fp);
    }

    #[test]
    fn rejects_unknown_class_and_bad_count() {
        let cat = Catalog::standard();
        let base = "objnav-floorplan 1\nid x\nroom_type Kitchen\ngrid 4 4\ncell_size 0.25\nsplit test\n";
        let err = parse_floorplan(&format!("{base}objects 1\nGizmo 0.1 0.1 0.1 0.1\n"), "mem", &cat).unwrap_err();
        assert!(err.to_string().contains("unknown class Gizmo"));
        let err = parse_floorplan(&format!("{base}objects 2\nMug 0.1 0.1 0.1 0.1\n"), "mem", &cat).unwrap_err();
        assert!(err.to_string().contains("declares 2"));
    }
}
