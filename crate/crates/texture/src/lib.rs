//! Store files, the HTTP service, and the pieces behind the `texture` command.

pub mod api;
pub mod columnar;
pub mod embedder;
pub mod profile;
pub mod records;
pub mod registry;
pub mod store_dir;
