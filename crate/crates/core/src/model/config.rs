use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagKind {
    /// A distinguished particle counted in `occupancy`.
    Tagged,
    /// A second-class particle; `occupancy` holds first-class particles only.
    SecondClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub position: usize,
    pub kind: TagKind,
}

/// Occupation numbers on the discrete torus `Z / NZ`, stored in the fixed
/// lattice frame, plus an optional distinguished particle.
///
/// The frame seen from the distinguished particle is obtained with
/// [`Configuration::frame_view`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ConfigurationWire", into = "ConfigurationWire")]
pub struct Configuration {
    occupancy: Vec<u32>,
    total: u64,
    tag: Option<Tag>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigurationWire {
    occupancy: Vec<u32>,
    #[serde(default)]
    tag: Option<Tag>,
}

impl TryFrom<ConfigurationWire> for Configuration {
    type Error = ModelError;

    fn try_from(w: ConfigurationWire) -> Result<Self, Self::Error> {
        let c = Configuration::new(w.occupancy)?;
        match w.tag {
            Some(tag) => c.with_tag(tag),
            None => Ok(c),
        }
    }
}

impl From<Configuration> for ConfigurationWire {
    fn from(c: Configuration) -> Self {
        Self { occupancy: c.occupancy, tag: c.tag }
    }
}

impl Configuration {
    pub fn new(occupancy: Vec<u32>) -> Result<Self, ModelError> {
        if occupancy.is_empty() {
            return Err(ModelError::InvalidConfiguration("torus has no sites".into()));
        }
        let total = occupancy.iter().map(|&k| k as u64).sum();
        Ok(Self { occupancy, total, tag: None })
    }

    pub fn empty(n_sites: usize) -> Self {
        Self::new(vec![0; n_sites.max(1)]).unwrap()
    }

    pub fn with_tag(mut self, tag: Tag) -> Result<Self, ModelError> {
        if tag.position >= self.n_sites() {
            return Err(ModelError::InvalidConfiguration(format!(
                "tag position {} outside torus of {} sites",
                tag.position,
                self.n_sites()
            )));
        }
        if tag.kind == TagKind::Tagged && self.occupancy[tag.position] == 0 {
            return Err(ModelError::NoParticleAtOrigin);
        }
        self.tag = Some(tag);
        Ok(self)
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.occupancy.len()
    }

    /// Cached particle count (first-class only for the second-class case).
    #[inline]
    pub fn total_particles(&self) -> u64 {
        self.total
    }

    #[inline]
    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    #[inline]
    pub fn get(&self, x: usize) -> u32 {
        self.occupancy[x]
    }

    pub fn tag(&self) -> Option<Tag> {
        self.tag
    }

    /// Site index `x + offset` reduced mod `N`.
    #[inline]
    pub fn wrap(&self, x: usize, offset: i64) -> usize {
        let n = self.n_sites() as i64;
        (x as i64 + offset).rem_euclid(n) as usize
    }

    /// Move one particle from `from` to `to`. Panics in debug builds if
    /// `from` is empty.
    #[inline]
    pub fn move_particle(&mut self, from: usize, to: usize) {
        debug_assert!(self.occupancy[from] > 0, "move from empty site {from}");
        self.occupancy[from] -= 1;
        self.occupancy[to] += 1;
    }

    /// Relocate the tag without touching occupancies (second-class jumps).
    pub(crate) fn set_tag_position(&mut self, position: usize) {
        if let Some(tag) = self.tag.as_mut() {
            tag.position = position;
        }
    }

    /// Recompute the particle count and compare with the cache.
    pub fn verify(&self) -> Result<(), ModelError> {
        let sum: u64 = self.occupancy.iter().map(|&k| k as u64).sum();
        if sum != self.total {
            return Err(ModelError::InvalidConfiguration(format!(
                "cached total {} != recount {sum}",
                self.total
            )));
        }
        if let Some(tag) = self.tag {
            if tag.kind == TagKind::Tagged && self.occupancy[tag.position] == 0 {
                return Err(ModelError::NoParticleAtOrigin);
            }
        }
        Ok(())
    }

    /// Mean occupation over the window `x - l ..= x + l` with periodic wrap.
    pub fn local_average(&self, x: usize, l: usize) -> Result<f64, ModelError> {
        let n = self.n_sites();
        if 2 * l + 1 > n {
            return Err(ModelError::WindowTooLarge { window: 2 * l + 1, n_sites: n });
        }
        let sum: u64 = (-(l as i64)..=l as i64)
            .map(|y| self.occupancy[self.wrap(x, y)] as u64)
            .sum();
        Ok(sum as f64 / (2 * l + 1) as f64)
    }

    /// Occupations seen from the tag: `view[x] = occupancy[tag + x]`.
    /// Without a tag this is the lattice frame itself.
    pub fn frame_view(&self) -> Vec<u32> {
        let origin = self.tag.map_or(0, |t| t.position);
        let n = self.n_sites();
        (0..n).map(|x| self.occupancy[(origin + x) % n]).collect()
    }

    /// The translation of the tagged frame by `z`: the tagged particle leaves
    /// its site for `tag + z` and the frame follows it. Particle count is
    /// unchanged.
    pub fn translate_frame(&self, z: i64) -> Result<Configuration, ModelError> {
        let tag = match self.tag {
            Some(t) if t.kind == TagKind::Tagged => t,
            _ => return Err(ModelError::NotTagged),
        };
        if self.occupancy[tag.position] == 0 {
            return Err(ModelError::NoParticleAtOrigin);
        }
        let mut next = self.clone();
        let to = self.wrap(tag.position, z);
        next.move_particle(tag.position, to);
        next.set_tag_position(to);
        Ok(next)
    }
}
