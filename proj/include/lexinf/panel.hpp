#ifndef LEXINF_PANEL_HPP
#define LEXINF_PANEL_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lexinf {

inline constexpr int kFormatVersion = 1;

/// Word x region x week usage counts with per-region-week exposure.
///
/// c(i, r, t) is the number of distinct authors in region r who used word i
/// during week t; s(r, t) is the number of distinct authors in region r who
/// posted anything that week. Every entry satisfies 0 <= c <= s.
class CountsPanel {
public:
    CountsPanel() = default;
    CountsPanel(int words, int regions, int weeks);

    int words() const noexcept { return words_; }
    int regions() const noexcept { return regions_; }
    int weeks() const noexcept { return weeks_; }

    std::int32_t& c(int i, int r, int t) { return counts_[index(i, r, t)]; }
    std::int32_t c(int i, int r, int t) const { return counts_[index(i, r, t)]; }
    std::int32_t& s(int r, int t) { return exposure_[static_cast<std::size_t>(r) * weeks_ + t]; }
    std::int32_t s(int r, int t) const { return exposure_[static_cast<std::size_t>(r) * weeks_ + t]; }

    std::vector<std::string> vocab;
    std::vector<int> region_ids;
    std::vector<std::string> region_names;
    /// ISO date (YYYY-MM-DD) of week index 0; empty if unknown.
    std::string week_start;

    /// Throws DataError on any c > s, negative count, or label size mismatch.
    void validate() const;

    bool operator==(const CountsPanel&) const = default;

private:
    std::size_t index(int i, int r, int t) const
    {
        return (static_cast<std::size_t>(i) * regions_ + r) * weeks_ + t;
    }

    int words_ = 0;
    int regions_ = 0;
    int weeks_ = 0;
    std::vector<std::int32_t> counts_;
    std::vector<std::int32_t> exposure_;
};

/// Write the panel directory: vocab.txt, regions.csv, meta.json,
/// counts.csv (sparse, zero rows omitted) and exposure.csv.
void write_panel(const CountsPanel& panel, const std::filesystem::path& dir);

CountsPanel read_panel(const std::filesystem::path& dir);

} // namespace lexinf

#endif // LEXINF_PANEL_HPP
