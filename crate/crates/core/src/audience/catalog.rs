use serde::{Deserialize, Serialize};

use super::{AgeGroup, AudienceError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Gender,
    Marital,
    Education,
    Travel,
    Interests,
    Religion,
    Technology,
    Connectivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attribute {
    pub key: &'static str,
    pub label: &'static str,
    pub category: Category,
}

/// Key of the pseudo-attribute with no targeting constraint (the total
/// audience used for normalization).
pub const TOTAL: &str = "total";

pub const CATALOG_SIZE: usize = 47;

const fn attr(key: &'static str, label: &'static str, category: Category) -> Attribute {
    Attribute { key, label, category }
}

use Category::*;

static CATALOG: [Attribute; CATALOG_SIZE] = [
    attr("males", "Males", Gender),
    attr("females", "Females", Gender),
    attr("single", "Single", Marital),
    attr("engaged", "Engaged", Marital),
    attr("married", "Married", Marital),
    attr("civil_union", "Civil Union", Marital),
    attr("high_school_grad", "High school grad", Education),
    attr("college_grad", "College grad", Education),
    attr("away_from_hometown", "Away from hometown", Travel),
    attr("away_from_family", "Away from family", Travel),
    attr("frequent_international_travelers", "Frequent international travelers", Travel),
    attr("frequent_travelers", "Frequent travelers", Travel),
    attr("returned_from_travels_1_week_ago", "Returned from travels 1 week ago", Travel),
    attr("returned_from_travels_2_weeks_ago", "Returned from travels 2 weeks ago", Travel),
    attr("expats", "Expats", Travel),
    attr("gambling", "Gambling", Interests),
    attr("casino", "Casino", Interests),
    attr("cooking", "Cooking", Interests),
    attr("restaurants", "Restaurants", Interests),
    attr("fast_food", "Fast food", Interests),
    attr("fitness_and_wellness", "Fitness and wellness", Interests),
    attr("lgbt_community", "LGBT community", Interests),
    attr("homosexuality", "Homosexuality", Interests),
    attr("same_sex_marriage", "Same-sex marriage", Interests),
    attr("catholic_church", "Catholic Church", Religion),
    attr("buddhism", "Buddhism", Religion),
    attr("atheism", "Atheism", Religion),
    attr("ios", "iOS", Technology),
    attr("android", "Android", Technology),
    attr("mac", "Mac", Technology),
    attr("windows", "Windows", Technology),
    attr("iphone_x", "iPhone X", Technology),
    attr("iphone_8", "iPhone 8", Technology),
    attr("iphone_8_plus", "iPhone 8 Plus", Technology),
    attr("galaxy_s8", "Galaxy S8", Technology),
    attr("galaxy_s9", "Galaxy S9", Technology),
    attr("samsung_android", "Samsung Android", Technology),
    attr("huawei", "Huawei", Technology),
    attr("oppo", "Oppo", Technology),
    attr("older_devices", "Older devices", Technology),
    attr("smartphone_and_tablet", "Smartphone and tablet", Technology),
    attr("tablet", "Tablet", Technology),
    attr("technology_early_adopters", "Technology early adopters", Technology),
    attr("network_2g", "2G", Connectivity),
    attr("network_3g", "3G", Connectivity),
    attr("network_4g", "4G", Connectivity),
    attr("wifi", "WiFi", Connectivity),
];

/// The targeting attributes queried for every location, in catalog order.
/// [`TOTAL`] is not part of the list.
pub fn catalog() -> &'static [Attribute] {
    &CATALOG
}

pub fn lookup(key: &str) -> Option<&'static Attribute> {
    CATALOG.iter().find(|a| a.key == key)
}

/// A single audience query: one attribute (or [`TOTAL`]) at one age group,
/// restricted to people whose home is in the location.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TargetingSpec {
    pub attribute: String,
    pub age_group: AgeGroup,
}

impl TargetingSpec {
    pub const RESIDENCE: &'static str = "home";

    pub fn new(attribute: &str, age_group: AgeGroup) -> Result<Self> {
        if attribute != TOTAL && lookup(attribute).is_none() {
            return Err(AudienceError::UnknownAttribute(attribute.to_string()));
        }
        Ok(Self { attribute: attribute.to_string(), age_group })
    }

    pub fn total(age_group: AgeGroup) -> Self {
        Self { attribute: TOTAL.to_string(), age_group }
    }

    /// `None` for the total pseudo-attribute.
    pub fn category(&self) -> Option<Category> {
        lookup(&self.attribute).map(|a| a.category)
    }

    pub fn is_total(&self) -> bool {
        self.attribute == TOTAL
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalog_has_47_unique_keys() {
        assert_eq!(catalog().len(), 47);
        let keys: HashSet<_> = catalog().iter().map(|a| a.key).collect();
        assert_eq!(keys.len(), 47);
        assert!(!keys.contains(TOTAL));
    }

    #[test]
    fn catalog_contents() {
        assert_eq!(lookup("males").unwrap().category, Category::Gender);
        assert_eq!(lookup("females").unwrap().category, Category::Gender);
        assert_eq!(lookup("technology_early_adopters").unwrap().category, Category::Technology);
        let per_category = |c| catalog().iter().filter(|a| a.category == c).count();
        assert_eq!(per_category(Category::Travel), 7);
        assert_eq!(per_category(Category::Technology), 16);
    }

    #[test]
    fn targeting_specs() {
        for a in catalog() {
            for g in AgeGroup::BOTH {
                assert!(TargetingSpec::new(a.key, g).is_ok());
            }
        }
        assert!(TargetingSpec::new(TOTAL, AgeGroup::Adult).unwrap().category().is_none());
        assert!(matches!(TargetingSpec::new("yachts", AgeGroup::All), Err(AudienceError::UnknownAttribute(_))));
    }
}
