//! Surface and phonological feature extraction for tokens in context,
//! backed by an editable character-property table.

mod extract;
mod phono;
mod pool;

pub use extract::{extract, extract_codes, extract_phonological, extract_surface};
pub use phono::PhonoTable;
pub use pool::{
    apply_mask, FeatureMask, FeaturePool, FeatureVector, Slot, SlotKind, CATEGORICAL_BUCKETS,
};
