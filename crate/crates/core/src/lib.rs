pub mod acl;
pub mod clock;
pub mod digest;
pub mod edge;
pub mod lang;
pub mod ledger;
pub mod model;
pub mod pdp;
