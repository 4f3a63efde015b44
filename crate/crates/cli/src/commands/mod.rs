pub mod analyze;
pub mod cluster;
pub mod compare;
pub mod map;
pub mod verify;
