//! Bundled country table: the 30 study countries, their UNSD intermediate
//! region (sub-region where no intermediate region exists), survey count and
//! most recent survey year.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyCountry {
    pub name: &'static str,
    pub region: &'static str,
    pub n_surveys: u32,
    pub recent_year: f64,
}

const fn entry(name: &'static str, region: &'static str, n_surveys: u32, recent_year: f64) -> StudyCountry {
    StudyCountry {
        name,
        region,
        n_surveys,
        recent_year,
    }
}

pub const STUDY_COUNTRIES: [StudyCountry; 30] = [
    entry("Afghanistan", "Southern Asia", 1, 2015.0),
    entry("Benin", "Western Africa", 5, 2017.0),
    entry("Burkina Faso", "Western Africa", 4, 2010.0),
    entry("Cameroon", "Middle Africa", 5, 2018.0),
    entry("Congo", "Middle Africa", 1, 2005.0),
    entry("Congo Democratic Republic", "Middle Africa", 2, 2013.0),
    entry("Cote d'Ivoire", "Western Africa", 3, 2011.0),
    entry("Ethiopia", "Eastern Africa", 5, 2019.0),
    entry("Ghana", "Western Africa", 5, 2014.0),
    entry("Guinea", "Western Africa", 4, 2018.0),
    entry("India", "Southern Asia", 4, 2005.0),
    entry("Kenya", "Eastern Africa", 5, 2014.0),
    entry("Liberia", "Western Africa", 4, 2019.0),
    entry("Madagascar", "Eastern Africa", 4, 2008.0),
    entry("Malawi", "Eastern Africa", 5, 2015.0),
    entry("Mali", "Western Africa", 5, 2018.0),
    entry("Mozambique", "Eastern Africa", 3, 2011.0),
    entry("Myanmar", "South-eastern Asia", 1, 2015.0),
    entry("Nepal", "Southern Asia", 5, 2016.0),
    entry("Niger", "Western Africa", 4, 2012.0),
    entry("Nigeria", "Western Africa", 5, 2018.0),
    entry("Pakistan", "Southern Asia", 4, 2017.0),
    entry("Philippines", "South-eastern Asia", 6, 2017.0),
    entry("Rwanda", "Eastern Africa", 6, 2019.0),
    entry("Senegal", "Western Africa", 10, 2019.0),
    entry("Sierra Leone", "Western Africa", 3, 2019.0),
    entry("Tanzania", "Eastern Africa", 6, 2015.0),
    entry("Togo", "Western Africa", 2, 2013.0),
    entry("Uganda", "Eastern Africa", 5, 2016.0),
    entry("Zimbabwe", "Eastern Africa", 5, 2015.0),
];

/// Case-insensitive lookup in the bundled table.
pub fn study_country(name: &str) -> Option<&'static StudyCountry> {
    let name = name.trim();
    STUDY_COUNTRIES
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case(name))
}

pub fn region_of(name: &str) -> Option<&'static str> {
    study_country(name).map(|c| c.region)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_case_insensitive() {
        assert_eq!(region_of("zimbabwe"), Some("Eastern Africa"));
        assert_eq!(region_of("  Nepal "), Some("Southern Asia"));
        assert_eq!(region_of("Atlantis"), None);
    }

    #[test]
    fn table_has_thirty_distinct_countries() {
        let mut names: Vec<_> = STUDY_COUNTRIES.iter().map(|c| c.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 30);
        // Just under half have data after 2015.
        let after = STUDY_COUNTRIES.iter().filter(|c| c.recent_year > 2015.0).count();
        assert_eq!(after, 14);
    }
}
