//! Object classes, room types and the per-room target/parent lists.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index into the catalog, identical to the knowledge-graph node order.
pub type ClassId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoomType {
    Kitchen,
    LivingRoom,
    Bedroom,
    Bathroom,
}

impl RoomType {
    pub const ALL: [RoomType; 4] = [
        RoomType::Kitchen,
        RoomType::LivingRoom,
        RoomType::Bedroom,
        RoomType::Bathroom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RoomType::Kitchen => "Kitchen",
            RoomType::LivingRoom => "LivingRoom",
            RoomType::Bedroom => "Bedroom",
            RoomType::Bathroom => "Bathroom",
        }
    }

    /// Lower-case identifier used in file names.
    pub fn slug(self) -> &'static str {
        match self {
            RoomType::Kitchen => "kitchen",
            RoomType::LivingRoom => "living_room",
            RoomType::Bedroom => "bedroom",
            RoomType::Bathroom => "bathroom",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoomType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RoomType::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s) || r.slug() == s)
            .ok_or_else(|| Error::Config(format!("unknown room type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectRole {
    Target,
    Parent,
    Background,
}

/// Vertical placement of a class. Gates which camera pitches can see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeightBand {
    Low,
    Mid,
    High,
}

impl HeightBand {
    /// -1 / 0 / +1, in the same units as a pitch step.
    pub fn offset(self) -> i32 {
        match self {
            HeightBand::Low => -1,
            HeightBand::Mid => 0,
            HeightBand::High => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectClass {
    pub id: ClassId,
    pub name: String,
    pub role: ObjectRole,
    pub room_types: Vec<RoomType>,
    pub height_band: HeightBand,
    /// Nominal footprint (width, depth) in meters.
    pub footprint: (f64, f64),
    /// Whether instances occupy grid cells.
    pub blocks: bool,
}

/// Target and parent lists per room type, in table order.
pub fn room_targets(room: RoomType) -> &'static [&'static str] {
    match room {
        RoomType::Kitchen => &["Toaster", "Spatula", "Bread", "Mug", "CoffeeMachine", "Apple"],
        RoomType::LivingRoom => &[
            "Painting",
            "Laptop",
            "Television",
            "RemoteControl",
            "Vase",
            "ArmChair",
        ],
        RoomType::Bedroom => &["Blinds", "DeskLamp", "Pillow", "AlarmClock", "CD"],
        RoomType::Bathroom => &["Mirror", "ToiletPaper", "SoapBar", "Towel", "SprayBottle"],
    }
}

pub fn room_parents(room: RoomType) -> &'static [&'static str] {
    match room {
        RoomType::Kitchen => &[
            "Fridge",
            "StoveBurner",
            "Microwave",
            "TableTop",
            "Sink",
            "CounterTop",
            "Shelf",
        ],
        RoomType::LivingRoom => &["Drawer", "Shelf", "TableTop", "Sofa", "FloorLamp"],
        RoomType::Bedroom => &["Shelf", "Dresser", "NightStand", "Drawer", "Desk", "Bed"],
        RoomType::Bathroom => &[
            "CounterTop",
            "Cabinet",
            "Drawer",
            "ShowerDoor",
            "Toilet",
            "Bathtub",
        ],
    }
}

use HeightBand::{High, Low, Mid};

// name, band, width, depth, blocks
const TARGETS: &[(&str, HeightBand, f64, f64, bool)] = &[
    ("Toaster", Mid, 0.3, 0.2, false),
    ("Spatula", Mid, 0.1, 0.3, false),
    ("Bread", Mid, 0.25, 0.15, false),
    ("Mug", Mid, 0.1, 0.1, false),
    ("CoffeeMachine", Mid, 0.3, 0.3, false),
    ("Apple", Mid, 0.1, 0.1, false),
    ("Painting", High, 0.8, 0.05, false),
    ("Laptop", Mid, 0.35, 0.25, false),
    ("Television", Mid, 1.0, 0.2, false),
    ("RemoteControl", Mid, 0.05, 0.15, false),
    ("Vase", Mid, 0.2, 0.2, false),
    ("ArmChair", Low, 0.5, 0.5, true),
    ("Blinds", High, 1.0, 0.05, false),
    ("DeskLamp", Mid, 0.2, 0.2, false),
    ("Pillow", Mid, 0.5, 0.3, false),
    ("AlarmClock", Mid, 0.15, 0.1, false),
    ("CD", Mid, 0.12, 0.12, false),
    ("Mirror", High, 0.6, 0.05, false),
    ("ToiletPaper", Low, 0.12, 0.12, false),
    ("SoapBar", Mid, 0.1, 0.06, false),
    ("Towel", Mid, 0.4, 0.1, false),
    ("SprayBottle", Mid, 0.1, 0.1, false),
];

const PARENTS: &[(&str, HeightBand, f64, f64, bool)] = &[
    ("Fridge", Mid, 0.5, 0.5, true),
    ("StoveBurner", Mid, 0.5, 0.5, true),
    ("Microwave", Mid, 0.5, 0.4, false),
    ("TableTop", Mid, 0.75, 0.75, true),
    ("Sink", Mid, 0.5, 0.5, true),
    ("CounterTop", Mid, 0.75, 0.5, true),
    ("Shelf", Mid, 0.75, 0.25, true),
    ("Drawer", Mid, 0.5, 0.5, true),
    ("Sofa", Low, 1.0, 0.5, true),
    ("FloorLamp", Mid, 0.25, 0.25, true),
    ("Dresser", Mid, 0.75, 0.5, true),
    ("NightStand", Low, 0.5, 0.5, true),
    ("Desk", Mid, 0.75, 0.5, true),
    ("Bed", Low, 0.75, 1.25, true),
    ("Cabinet", Mid, 0.5, 0.5, true),
    ("ShowerDoor", Mid, 0.75, 0.05, false),
    ("Toilet", Low, 0.5, 0.5, true),
    ("Bathtub", Low, 0.75, 1.0, true),
];

const BACKGROUND: &[(&str, HeightBand, f64, f64, bool)] = &[
    ("Chair", Low, 0.25, 0.25, true),
    ("Window", High, 1.0, 0.05, false),
    ("HousePlant", Low, 0.25, 0.25, true),
    ("Book", Mid, 0.2, 0.15, false),
    ("Box", Low, 0.3, 0.3, false),
    ("LightSwitch", High, 0.1, 0.05, false),
];

/// The full, immutable class table.
#[derive(Debug, Clone)]
pub struct Catalog {
    classes: Vec<ObjectClass>,
    by_name: HashMap<String, ClassId>,
}

impl Catalog {
    /// Built-in object set: every target and parent of the four room types plus
    /// a handful of background clutter classes.
    pub fn standard() -> Self {
        let mut classes = Vec::new();
        for (role, table) in [
            (ObjectRole::Target, TARGETS),
            (ObjectRole::Parent, PARENTS),
            (ObjectRole::Background, BACKGROUND),
        ] {
            for &(name, band, w, d, blocks) in table {
                let room_types = match role {
                    ObjectRole::Background => RoomType::ALL.to_vec(),
                    ObjectRole::Target => RoomType::ALL
                        .into_iter()
                        .filter(|r| room_targets(*r).contains(&name))
                        .collect(),
                    ObjectRole::Parent => RoomType::ALL
                        .into_iter()
                        .filter(|r| room_parents(*r).contains(&name))
                        .collect(),
                };
                classes.push(ObjectClass {
                    id: classes.len(),
                    name: name.to_string(),
                    role,
                    room_types,
                    height_band: band,
                    footprint: (w, d),
                    blocks,
                });
            }
        }
        Self::from_classes(classes)
    }

    pub fn from_classes(classes: Vec<ObjectClass>) -> Self {
        let by_name = classes.iter().map(|c| (c.name.clone(), c.id)).collect();
        Catalog { classes, by_name }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ObjectClass] {
        &self.classes
    }

    pub fn get(&self, id: ClassId) -> &ObjectClass {
        &self.classes[id]
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.classes[id].name
    }

    pub fn id(&self, name: &str) -> Result<ClassId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn lookup(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name).copied()
    }

    pub fn targets(&self, room: RoomType) -> Vec<ClassId> {
        room_targets(room).iter().map(|n| self.by_name[*n]).collect()
    }

    pub fn parents(&self, room: RoomType) -> Vec<ClassId> {
        room_parents(room).iter().map(|n| self.by_name[*n]).collect()
    }

    pub fn background(&self) -> Vec<ClassId> {
        self.classes
            .iter()
            .filter(|c| c.role == ObjectRole::Background)
            .map(|c| c.id)
            .collect()
    }
}
