use std::fmt::Write as _;

use crate::catalog::{Catalog, ClassId, RoomType};
use crate::error::{Error, Result};
use crate::world::{distance, Floorplan};

/// Shipped tables are rounded to two decimals, so their rows sum to 1 only
/// approximately.
pub const SHIPPED_ROW_TOLERANCE: f64 = 0.02;

/// Per-room table of Pr(target | parent): one row per target of the room, one
/// column per parent.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRewardMatrix {
    pub room_type: RoomType,
    pub targets: Vec<ClassId>,
    pub parents: Vec<ClassId>,
    /// `values[row][col]`, rows follow `targets`, columns follow `parents`.
    pub values: Vec<Vec<f64>>,
}

impl PartialRewardMatrix {
    pub fn row_index(&self, target: ClassId) -> Option<usize> {
        self.targets.iter().position(|&t| t == target)
    }

    pub fn row(&self, target: ClassId) -> Option<&[f64]> {
        self.row_index(target).map(|r| self.values[r].as_slice())
    }

    pub fn get(&self, target: ClassId, parent: ClassId) -> Option<f64> {
        let r = self.row_index(target)?;
        let c = self.parents.iter().position(|&p| p == parent)?;
        Some(self.values[r][c])
    }

    /// Parent with the largest entry in the target's row; ties go to the lowest
    /// class id.
    pub fn argmax_parent(&self, target: ClassId) -> Option<ClassId> {
        let row = self.row(target)?;
        let mut best: Option<(ClassId, f64)> = None;
        for (&p, &v) in self.parents.iter().zip(row) {
            match best {
                Some((bp, bv)) if v < bv || (v == bv && p > bp) => {}
                _ => best = Some((p, v)),
            }
        }
        best.map(|(p, _)| p)
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Entries in [0, 1] and each row summing to 1 within `tolerance`.
    pub fn check_rows(&self, tolerance: f64) -> Result<()> {
        for (t, row) in self.targets.iter().zip(&self.values) {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("row {t} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tolerance + 1e-9 {
                return Err(Error::Config(format!("row {t} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Counts (target instance, parent instance) pairs within `radius` meters
/// across `floorplans`, then normalizes each row. Targets that were never near
/// a parent get a uniform row.
pub fn build_partial_reward_matrix(
    floorplans: &[&Floorplan],
    room: RoomType,
    radius: f64,
    catalog: &Catalog,
) -> Result<PartialRewardMatrix> {
    if floorplans.is_empty() {
        return Err(Error::Empty("floorplan list for the partial reward matrix"));
    }
    if let Some(fp) = floorplans.iter().find(|f| f.room_type != room) {
        return Err(Error::Config(format!("floorplan {} is not a {room}", fp.id)));
    }
    let targets = catalog.targets(room);
    let parents = catalog.parents(room);
    let mut counts = vec![vec![0u64; parents.len()]; targets.len()];
    for fp in floorplans {
        for (r, &t) in targets.iter().enumerate() {
            for ti in fp.instances_of(t) {
                for (c, &p) in parents.iter().enumerate() {
                    counts[r][c] += fp
                        .instances_of(p)
                        .filter(|pi| distance(ti.position, pi.position) <= radius)
                        .count() as u64;
                }
            }
        }
    }
    let values = counts
        .into_iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                vec![1.0 / parents.len() as f64; parents.len()]
            } else {
                row.into_iter().map(|c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(PartialRewardMatrix {
        room_type: room,
        targets,
        parents,
        values,
    })
}

/// Text layout:
///
/// ```text
/// room<TAB>Kitchen
/// target<TAB>Fridge<TAB>StoveBurner…
/// Toaster<TAB>0.15<TAB>0.29…
/// ```
///
/// `-` stands for 0. Row and column sets must match the room's lists exactly.
pub fn parse_reward_matrix(text: &str, source: &str, catalog: &Catalog) -> Result<PartialRewardMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (n, room_line) = lines.next().ok_or_else(|| Error::parse(source, 0, "empty matrix file"))?;
    let room: RoomType = match room_line.split('\t').collect::<Vec<_>>().as_slice() {
        ["room", r] => r.trim().parse()?,
        _ => return Err(Error::parse(source, n + 1, "expected `room<TAB>name`")),
    };
    let (n, header) = lines.next().ok_or_else(|| Error::parse(source, 0, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols.first() != Some(&"target") {
        return Err(Error::parse(source, n + 1, "header must start with `target`"));
    }
    let parents = cols[1..]
        .iter()
        .map(|c| catalog.id(c))
        .collect::<Result<Vec<_>>>()?;
    let mut targets = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines {
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() != parents.len() + 1 {
            return Err(Error::parse(source, n + 1, "row width differs from header"));
        }
        targets.push(catalog.id(cells[0])?);
        let row = cells[1..]
            .iter()
            .map(|c| match *c {
                "-" => Ok(0.0),
                v => v
                    .parse::<f64>()
                    .map_err(|_| Error::parse(source, n + 1, format!("bad entry {v:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    let mut want_t = catalog.targets(room);
    let mut want_p = catalog.parents(room);
    let (mut got_t, mut got_p) = (targets.clone(), parents.clone());
    want_t.sort_unstable();
    want_p.sort_unstable();
    got_t.sort_unstable();
    got_p.sort_unstable();
    if want_t != got_t || want_p != got_p {
        return Err(Error::parse(source, 0, format!("rows/columns do not match the {room} lists")));
    }
    Ok(PartialRewardMatrix {
        room_type: room,
        targets,
        parents,
        values,
    })
}

pub fn write_reward_matrix(m: &PartialRewardMatrix, catalog: &Catalog) -> String {
    let mut s = format!("room\t{}\ntarget", m.room_type.name());
    for &p in &m.parents {
        let _ = write!(s, "\t{}", catalog.name(p));
    }
    s.push('\n');
    for (&t, row) in m.targets.iter().zip(&m.values) {
        s.push_str(catalog.name(t));
        for v in row {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    s
}

/// The reference co-location tables bundled with the crate.
pub fn shipped_reward_matrix(room: RoomType, catalog: &Catalog) -> Result<PartialRewardMatrix> {
    let (name, text) = match room {
        RoomType::Kitchen => ("kitchen.tsv", include_str!("../../data/partial_reward/kitchen.tsv")),
        RoomType::LivingRoom => ("living_room.tsv", include_str!("../../data/partial_reward/living_room.tsv")),
        RoomType::Bedroom => ("bedroom.tsv", include_str!("../../data/partial_reward/bedroom.tsv")),
        RoomType::Bathroom => ("bathroom.tsv", include_str!("../../data/partial_reward/bathroom.tsv")),
    };
    parse_reward_matrix(text, name, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ObjectInstance, Split};

    fn fp(room: RoomType, objs: &[(&str, (f64, f64))], cat: &Catalog) -> Floorplan {
        let objects = objs
            .iter()
            .map(|(n, p)| ObjectInstance {
                class: cat.id(n).unwrap(),
                position: *p,
                footprint: (0.1, 0.1),
            })
            .collect();
        Floorplan::new("toy", room, (20, 20), 0.25, objects, Split::Train, cat).unwrap()
    }

    #[test]
    fn shipped_tables_load_within_rounding() {
        let cat = Catalog::standard();
        for room in RoomType::ALL {
            let m = shipped_reward_matrix(room, &cat).unwrap();
            m.check_rows(SHIPPED_ROW_TOLERANCE).unwrap();
        }
        let k = shipped_reward_matrix(RoomType::Kitchen, &cat).unwrap();
        let toaster = cat.id("Toaster").unwrap();
        assert_eq!(k.get(toaster, cat.id("StoveBurner").unwrap()), Some(0.29));
        assert_eq!(k.get(toaster, cat.id("Shelf").unwrap()), Some(0.0));
        assert_eq!(k.argmax_parent(toaster), cat.lookup("StoveBurner"));
        assert!((k.row(toaster).unwrap().iter().sum::<f64>() - 1.01).abs() < 1e-9);
    }

    #[test]
    fn single_parent_nearby_gets_all_mass() {
        let cat = Catalog::standard();
        let f = fp(RoomType::Bedroom, &[("Blinds", (2.0, 2.0)), ("Shelf", (2.5, 2.0)), ("Bed", (4.0, 4.0))], &cat);
        let m = build_partial_reward_matrix(&[&f], RoomType::Bedroom, 1.0, &cat).unwrap();
        let blinds = cat.id("Blinds").unwrap();
        assert_eq!(m.get(blinds, cat.id("Shelf").unwrap()), Some(1.0));
        assert_eq!(m.get(blinds, cat.id("Bed").unwrap()), Some(0.0));
    }

    #[test]
    fn split_counts_and_uniform_fallback() {
        let cat = Catalog::standard();
        let f = fp(
            RoomType::Kitchen,
            &[
                ("Mug", (1.0, 1.0)),
                ("Mug", (3.0, 3.0)),
                ("StoveBurner", (1.5, 1.0)),
                ("StoveBurner", (3.0, 3.5)),
                ("Sink", (1.0, 1.5)),
                ("Sink", (3.5, 3.0)),
                ("Apple", (0.2, 4.8)),
            ],
            &cat,
        );
        let m = build_partial_reward_matrix(&[&f], RoomType::Kitchen, 1.0, &cat).unwrap();
        let mug = cat.id("Mug").unwrap();
        assert_eq!(m.get(mug, cat.id("StoveBurner").unwrap()), Some(0.5));
        assert_eq!(m.get(mug, cat.id("Sink").unwrap()), Some(0.5));
        let apple = m.row(cat.id("Apple").unwrap()).unwrap();
        assert!(apple.iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
        m.check_rows(1e-9).unwrap();
    }

    #[test]
    fn empty_input_errors() {
        let cat = Catalog::standard();
        assert!(matches!(
            build_partial_reward_matrix(&[], RoomType::Kitchen, 1.0, &cat),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let cat = Catalog::standard();
        let m = shipped_reward_matrix(RoomType::Bathroom, &cat).unwrap();
        let back = parse_reward_matrix(&write_reward_matrix(&m, &cat), "mem", &cat).unwrap();
        assert_eq!(back, m);
    }
}
