//! The bundled chest-radiography ontology and concept embedding table.

use rand_distr::{Distribution, StandardNormal};

use kg_tensor::rng;

use crate::embedding::EmbeddingTable;
use crate::ontology::{ConceptId, Ontology};

pub const ONTOLOGY_TSV: &str = include_str!("../data/ontology.tsv");
pub const EMBEDDINGS_TXT: &str = include_str!("../data/embeddings.txt");

pub const EMBEDDING_SEED: u64 = 2048;

/// Distance of a group member from its group centre in the shipped table.
/// Zero: members of a group share one vector, so only ontology relations
/// tell them apart.
pub const GROUP_SPREAD: f64 = 0.0;

/// CUIs referenced by the report generator.
pub mod cui {
    pub const PLEURAL_EFFUSION: &str = "C0032227";
    pub const PULMONARY_EDEMA: &str = "C0034063";
    pub const EDEMA: &str = "C0013604";
    pub const CARDIOMEGALY: &str = "C0018800";
    pub const CONSOLIDATION: &str = "C0521530";
    pub const PNEUMONIA: &str = "C0032285";
    pub const ATELECTASIS: &str = "C0004144";
    pub const PNEUMOTHORAX: &str = "C0032326";
    pub const OPACITY: &str = "C1265876";
    pub const INFILTRATE: &str = "C0332448";
    pub const NODULE: &str = "C0028259";
    pub const MASS: &str = "C0577559";
    pub const PLEURAL_THICKENING: &str = "C0264545";
    pub const FRACTURE: &str = "C0016658";
    pub const EMPHYSEMA: &str = "C0034067";
    pub const HIATAL_HERNIA: &str = "C0019291";
    pub const CALCIFIED: &str = "C0175895";
    pub const GRANULOMA: &str = "C0018188";
    pub const BLUNTING: &str = "C1096208";
    pub const VASCULAR_CONGESTION: &str = "C0700301";
    pub const LYMPHADENOPATHY: &str = "C0497156";
    pub const SCOLIOSIS: &str = "C0036439";
    pub const ATHEROSCLEROSIS: &str = "C0004153";
    pub const ENLARGED: &str = "C0442800";
    pub const ABSENT: &str = "C0332197";
    pub const NORMAL: &str = "C0205307";
    pub const MILD: &str = "C2945599";
    pub const MODERATE: &str = "C0205081";
    pub const SEVERE: &str = "C0205082";
    pub const SMALL: &str = "C0700321";
    pub const LARGE: &str = "C0549177";
    pub const LEFT: &str = "C0205091";
    pub const RIGHT: &str = "C0205090";
    pub const BILATERAL: &str = "C0238767";
    pub const STABLE: &str = "C0205360";
    pub const IMPROVED: &str = "C0184511";
    pub const LUNG: &str = "C0024109";
    pub const HEART: &str = "C0018787";
    pub const MEDIASTINUM: &str = "C0025066";
    pub const HILUM: &str = "C0929227";
    pub const PLEURA: &str = "C0032225";
    pub const RIB: &str = "C0035561";
    pub const CLAVICLE: &str = "C0008913";
    pub const LOWER_LOBE: &str = "C0225758";
    pub const UPPER_LOBE: &str = "C0225756";
    pub const MIDDLE_LOBE: &str = "C0225757";
    pub const LUNG_BASE: &str = "C0225752";
    pub const COSTOPHRENIC_ANGLE: &str = "C0230151";
    pub const CARDIOPHRENIC_ANGLE: &str = "C0230152";
    pub const DIAPHRAGM: &str = "C0011980";
    pub const SPINE: &str = "C0037949";
    pub const AORTA: &str = "C0003483";
    pub const TRACHEA: &str = "C0040578";
    pub const ENDOTRACHEAL_TUBE: &str = "C0336630";
    pub const CENTRAL_LINE: &str = "C0007430";
    pub const PACEMAKER: &str = "C0030163";
    pub const NASOGASTRIC_TUBE: &str = "C0085678";
    pub const CHEST_TUBE: &str = "C0008034";
    pub const STERNOTOMY: &str = "C0038298";
}

/// Concepts that share one shipped vector, so that only their
/// ontology relations tell them apart.
pub const SIMILAR_GROUPS: &[&[&str]] = &[
    &[cui::HEART, cui::HILUM],
    &[cui::COSTOPHRENIC_ANGLE, cui::CARDIOPHRENIC_ANGLE],
    &[cui::LOWER_LOBE, cui::UPPER_LOBE, cui::MIDDLE_LOBE, cui::LUNG_BASE],
];

pub fn ontology() -> Ontology {
    Ontology::parse(ONTOLOGY_TSV).expect("bundled ontology parses")
}

pub fn embeddings() -> EmbeddingTable {
    EmbeddingTable::parse(EMBEDDINGS_TXT).expect("bundled embeddings parse")
}

fn unit_gaussian(r: &mut rng::Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Unit vectors in random directions, except that members of each group share
/// a centre and sit `spread` away from it.
pub fn clustered_embeddings(o: &Ontology, groups: &[&[&str]], dim: usize, spread: f64, seed: u64) -> EmbeddingTable {
    let mut table = EmbeddingTable::new(dim);
    for c in o.concepts() {
        let key = rng::stable_hash(c.id.as_str().as_bytes());
        let group = groups.iter().position(|g| g.contains(&c.id.as_str()));
        let v = match group {
            None => unit_gaussian(&mut rng::stream(seed, &[key]), dim),
            Some(gi) => {
                let centre = unit_gaussian(&mut rng::stream(seed, &[u64::MAX, gi as u64]), dim);
                let offset = unit_gaussian(&mut rng::stream(seed, &[key]), dim);
                centre.iter().zip(&offset).map(|(c, o)| c + spread * o).collect()
            }
        };
        table.insert(c.id.clone(), v).expect("dimension matches");
    }
    table
}

pub fn concept(id: &str) -> ConceptId {
    ConceptId::new(id).expect("well-formed CUI")
}
