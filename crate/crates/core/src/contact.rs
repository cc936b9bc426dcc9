//! Contact inference from a posed hand mesh and the contact correspondence set.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{CorrespondenceSet, Tag};
use crate::geometry::{Point3, SpatialIndex};

pub type BoneId = u16;

/// Per-vertex bone labels and end-effector designation; shared by every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandTopology {
    pub bone_names: Vec<String>,
    pub bone_label: Vec<BoneId>,
    pub end_effectors: Vec<BoneId>,
}

impl HandTopology {
    pub fn validate(&self) -> Result<()> {
        if self.end_effectors.is_empty() {
            return Err(Error::invalid("end_effectors", "at least one end-effector is required"));
        }
        let nb = self.bone_names.len();
        if let Some(b) = self
            .bone_label
            .iter()
            .chain(&self.end_effectors)
            .find(|&&b| b as usize >= nb)
        {
            return Err(Error::invalid("bone_label", format!("bone id {b} has no name")));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.bone_label.len()
    }

    pub fn bone_id(&self, name: &str) -> Option<BoneId> {
        self.bone_names.iter().position(|n| n == name).map(|i| i as BoneId)
    }

    /// Vertex indices labeled with `bone`, ascending.
    pub fn vertices_of(&self, bone: BoneId) -> impl Iterator<Item = usize> + '_ {
        self.bone_label
            .iter()
            .enumerate()
            .filter(move |(_, &b)| b == bone)
            .map(|(i, _)| i)
    }
}

/// Hand mesh vertices posed for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedHand {
    pub topology: Arc<HandTopology>,
    pub vertices: Vec<Point3>,
}

impl PosedHand {
    pub fn new(topology: Arc<HandTopology>, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != topology.vertex_count() {
            return Err(Error::invalid(
                "hand_vertices",
                format!(
                    "{} posed vertices for a {}-vertex hand model",
                    vertices.len(),
                    topology.vertex_count()
                ),
            ));
        }
        Ok(Self { topology, vertices })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    pub initial_threshold_mm: f64,
    pub threshold_step_mm: f64,
    pub threshold_cap_mm: f64,
    /// A bone qualifies with strictly more candidate vertices than this.
    pub min_vertices: usize,
    pub min_bones: usize,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            initial_threshold_mm: 1.0,
            threshold_step_mm: 0.5,
            threshold_cap_mm: 10.0,
            min_vertices: 40,
            min_bones: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactState {
    /// Ascending bone ids.
    pub contact_bones: Vec<BoneId>,
    /// Ascending vertex indices of all contact bones.
    pub contact_vertices: Vec<usize>,
    pub threshold_used: f64,
}

/// Grows the distance threshold from 1.0 mm in 0.5 mm steps until at least
/// two end-effectors each have more than 40 vertices closer than it to the
/// object cloud.
pub fn detect_contacts(
    hand: &PosedHand,
    object: &SpatialIndex,
    config: &ContactConfig,
) -> Result<ContactState> {
    let topo = &hand.topology;
    let effectors: BTreeSet<BoneId> = topo.end_effectors.iter().copied().collect();
    let candidates: Vec<usize> = (0..topo.vertex_count())
        .filter(|&i| effectors.contains(&topo.bone_label[i]))
        .collect();
    let distances: Vec<f64> = candidates
        .par_iter()
        .map(|&i| object.nearest(&hand.vertices[i]).distance)
        .collect();

    let mut step = 0u32;
    loop {
        let d = config.initial_threshold_mm + step as f64 * config.threshold_step_mm;
        if d > config.threshold_cap_mm + 1e-12 {
            return Err(Error::NoContact {
                cap_mm: config.threshold_cap_mm,
            });
        }
        let mut counts = std::collections::BTreeMap::<BoneId, usize>::new();
        for (&v, &dist) in candidates.iter().zip(&distances) {
            if dist < d {
                *counts.entry(topo.bone_label[v]).or_default() += 1;
            }
        }
        let bones: Vec<BoneId> = counts
            .into_iter()
            .filter(|&(_, c)| c > config.min_vertices)
            .map(|(b, _)| b)
            .collect();
        if bones.len() >= config.min_bones {
            let contact_vertices = (0..topo.vertex_count())
                .filter(|&i| bones.binary_search(&topo.bone_label[i]).is_ok())
                .collect();
            return Ok(ContactState {
                contact_bones: bones,
                contact_vertices,
                threshold_used: d,
            });
        }
        step += 1;
    }
}

/// Pairs every vertex of the bones in contact in both frames with itself
/// across the two poses.
pub fn contact_correspondences(
    source_hand: &PosedHand,
    target_hand: &PosedHand,
    source_state: Option<&ContactState>,
    target_state: Option<&ContactState>,
) -> Result<CorrespondenceSet> {
    let mut set = CorrespondenceSet::new(Tag::Contact);
    let (Some(s), Some(t)) = (source_state, target_state) else {
        return Ok(set);
    };
    if source_hand.vertices.len() != target_hand.vertices.len() {
        return Err(Error::invalid(
            "hand_vertices",
            "source and target hands have different topology",
        ));
    }
    let shared: BTreeSet<BoneId> = s
        .contact_bones
        .iter()
        .filter(|b| t.contact_bones.contains(b))
        .copied()
        .collect();
    for (i, b) in source_hand.topology.bone_label.iter().enumerate() {
        if shared.contains(b) {
            set.push(source_hand.vertices[i], target_hand.vertices[i]);
        }
    }
    Ok(set)
}
