use std::path::Path;

use svexplore_core::viz::Bookmark;

use crate::error::Result;
use crate::io::{read_json, write_json};

/// Bookmarks ordered by id, persisted as a JSON array.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bookmarks {
    pub items: Vec<Bookmark>,
}

impl Bookmarks {
    /// A missing file loads as empty.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let mut items: Vec<Bookmark> = read_json(path)?;
        items.sort_by_key(|b| b.id);
        Ok(Self { items })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.items)
    }

    pub fn get(&self, id: u32) -> Option<&Bookmark> {
        self.items.iter().find(|b| b.id == id)
    }

    pub fn next_id(&self) -> u32 {
        self.items.last().map_or(1, |b| b.id + 1)
    }

    /// Inserts with a fresh id and returns it.
    pub fn create(&mut self, mut b: Bookmark) -> u32 {
        b.id = self.next_id();
        let id = b.id;
        self.items.push(b);
        id
    }

    /// Replaces an existing bookmark; false if `id` is unknown.
    pub fn update(&mut self, id: u32, mut b: Bookmark) -> bool {
        b.id = id;
        match self.items.iter_mut().find(|x| x.id == id) {
            Some(slot) => {
                *slot = b;
                true
            }
            None => false,
        }
    }

    pub fn delete(&mut self, id: u32) -> bool {
        let before = self.items.len();
        self.items.retain(|b| b.id != id);
        self.items.len() != before
    }
}
