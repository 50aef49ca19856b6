#ifndef LEXINF_CORPUS_HPP
#define LEXINF_CORPUS_HPP

#include "lexinf/panel.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lexinf::corpus {

inline constexpr std::int64_t kSecondsPerWeek = 604800;

struct MessageRecord {
    std::string author_id;
    double latitude = 0.0;
    double longitude = 0.0;
    std::int64_t timestamp = 0;
    std::vector<std::string> tokens;
    bool is_retweet = false;
    bool has_url = false;
};

struct RegionCentroid {
    int region_id = 0;
    std::string name;
    double latitude = 0.0;
    double longitude = 0.0;
};

struct CorpusOptions {
    int min_author_messages = 10;
    int max_author_messages = 1000;
    std::size_t top_n = 10000;
    /// A word survives if some (region, week) count is strictly above this.
    int min_peak_count = 5;
    /// Epoch seconds of week 0. Defaults to midnight UTC of the earliest message.
    std::optional<std::int64_t> origin;
    /// Number of weeks. Defaults to one past the last populated week.
    std::optional<int> weeks;
};

struct IngestStats {
    std::size_t records_read = 0;
    std::size_t malformed_lines = 0;
    std::size_t dropped_messages = 0;
    std::size_t authors_seen = 0;
    std::size_t authors_kept = 0;
    std::size_t authors_dropped = 0;
    std::size_t records_before_origin = 0;
    std::size_t records_out_of_range = 0;
    std::size_t vocab_candidates = 0;
    std::size_t vocab_size = 0;
    std::vector<std::string> warnings;
};

/// Collapse every run of one repeated code point longer than two to exactly two.
std::string normalize_elongation(std::string_view token);

/// True if the record survives message-level filtering (no retweets, no
/// "RT" token, no URLs).
bool keep_message(const MessageRecord& record);

std::vector<MessageRecord> filter_messages(std::vector<MessageRecord> records);

/// Authors whose filtered message count lies in [min, max], inclusive.
std::vector<std::string> filter_authors(const std::vector<MessageRecord>& records, int min_messages,
                                        int max_messages);

/// Region whose centroid is nearest (haversine) to the arithmetic mean of the
/// given (lat, lon) points. Ties go to the lowest region_id.
int assign_region(const std::vector<std::pair<double, double>>& locations,
                  const std::vector<RegionCentroid>& centroids);

/// floor((timestamp - origin) / week); nullopt if timestamp precedes origin.
std::optional<int> bin_weeks(std::int64_t timestamp, std::int64_t origin);

/// Per-word aggregates used for vocabulary selection.
struct TokenTally {
    std::int64_t total_frequency = 0;
    /// Max over (region, week) of distinct-author usage.
    int peak_author_count = 0;
};

/// Rank by total token frequency (ties by word), skipping '#'/'@' tokens,
/// keep the top N, then keep words whose peak count exceeds min_peak_count.
/// Output preserves rank order.
std::vector<std::string> select_vocabulary(const std::unordered_map<std::string, TokenTally>& tallies,
                                           std::size_t top_n, int min_peak_count);

/// Records must be fully filtered and region-assigned through author_region.
/// Counts distinct authors per cell; s counts distinct posting authors.
CountsPanel build_counts_panel(const std::vector<MessageRecord>& records,
                               const std::unordered_map<std::string, int>& author_region,
                               const std::vector<std::string>& vocab,
                               const std::vector<RegionCentroid>& centroids, std::int64_t origin, int weeks,
                               IngestStats* stats = nullptr);

/// Full ingestion: filter, assign, select vocabulary, build panel.
CountsPanel ingest(std::vector<MessageRecord> records, const std::vector<RegionCentroid>& centroids,
                   const CorpusOptions& options, IngestStats& stats);

/// Parse JSONL (fields author, lat, lon, ts, tokens, rt, url). Malformed
/// lines are counted in stats and skipped.
std::vector<MessageRecord> read_messages_jsonl(std::istream& in, IngestStats& stats);

/// CSV with header region_id,name,lat,lon.
std::vector<RegionCentroid> read_centroids_csv(const std::filesystem::path& path);

/// Parse YYYY-MM-DD as midnight UTC in epoch seconds.
std::int64_t parse_iso_date(const std::string& date);
std::string format_iso_date(std::int64_t epoch_seconds);

} // namespace lexinf::corpus

#endif // LEXINF_CORPUS_HPP
