//! HTTP annotation service.
//!
//! Experts pull a work queue of images, submit one annotation per image,
//! and the consensus view is computed on read from the annotation log.
//! Annotator ids are self-declared; there is no authentication.

pub mod api;
pub mod store;

pub use api::{cors_layer, router, serve, AppState, ImageCatalog, DEFAULT_PORT};
pub use store::{AnnotationStore, StoreError};
