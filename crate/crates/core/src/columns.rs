//! Column names of the notification register dumps.

pub const NUMBER: &str = "NUMBER";
pub const CLASSIFICATION: &str = "CLASSIFICATION";
pub const DATE_CASE: &str = "DATE_CASE";
pub const REF: &str = "REF";
pub const NOTIFICATION_COUNTRY: &str = "NOTIFICATION_COUNTRY";
pub const SUBJECT: &str = "SUBJECT";
pub const PRODUCT_CATEGORY: &str = "PRODUCT_CATEGORY";
pub const TYPE: &str = "TYPE";
pub const RISK_DECISION: &str = "RISK_DECISION";
pub const ACTION_TAKEN: &str = "ACTION_TAKEN";
pub const DISTRIBUTION_STATUS: &str = "DISTRIBUTION_STATUS";
pub const PRODUCT: &str = "PRODUCT";
pub const HAZARD: &str = "HAZARD";
pub const HAZARD_CATEGORY: &str = "HAZARD_CATEGORY";
pub const COUNTRY_ORIGIN: &str = "COUNTRY_ORIGIN";
pub const COUNTRY_DESTINATION: &str = "COUNTRY_DESTINATION";
pub const COUNTRY_DISTRIBUTION: &str = "COUNTRY_DISTRIBUTION";

/// Month of `DATE_CASE`, derived during pre-processing.
pub const DATE_MONTH: &str = "DATE_MONTH";
/// Year of `DATE_CASE`, derived during pre-processing; stored per row, not modelled.
pub const YEAR: &str = "YEAR";

/// The full scraped header, in dump order.
pub const RAW_HEADER: [&str; 17] = [
    NUMBER,
    CLASSIFICATION,
    DATE_CASE,
    REF,
    NOTIFICATION_COUNTRY,
    SUBJECT,
    PRODUCT_CATEGORY,
    TYPE,
    RISK_DECISION,
    ACTION_TAKEN,
    DISTRIBUTION_STATUS,
    PRODUCT,
    HAZARD,
    HAZARD_CATEGORY,
    COUNTRY_ORIGIN,
    COUNTRY_DESTINATION,
    COUNTRY_DISTRIBUTION,
];

/// Identifier columns dropped before modelling.
pub const IDENTIFIERS: [&str; 2] = [NUMBER, REF];

/// Free-text columns carried through ingestion but never modelled.
pub const FREE_TEXT: [&str; 3] = [SUBJECT, PRODUCT, HAZARD];

/// Stage inputs of the first predictor.
pub const STAGE1_INPUTS: [&str; 4] = [
    DATE_MONTH,
    NOTIFICATION_COUNTRY,
    DISTRIBUTION_STATUS,
    COUNTRY_ORIGIN,
];

/// Targets of stages 1, 2 and 3.
pub const STAGE_TARGETS: [&str; 3] = [PRODUCT_CATEGORY, HAZARD_CATEGORY, ACTION_TAKEN];
