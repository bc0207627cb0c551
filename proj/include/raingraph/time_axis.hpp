#pragma once

#include <compare>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace raingraph {

// Calendar month. Serial index is year*12 + (month-1) so arithmetic over
// month boundaries is plain integer arithmetic.
struct YearMonth {
    int year = 0;
    int month = 1;  // 1..12

    static YearMonth from_serial(long serial) {
        int y = static_cast<int>(serial >= 0 ? serial / 12 : (serial - 11) / 12);
        int m = static_cast<int>(serial - static_cast<long>(y) * 12) + 1;
        return {y, m};
    }
    long serial() const { return static_cast<long>(year) * 12 + (month - 1); }

    YearMonth plus_months(int n) const { return from_serial(serial() + n); }

    auto operator<=>(const YearMonth&) const = default;

    std::string str() const;                       // "YYYY-MM"
    static YearMonth parse(const std::string& s);  // accepts "YYYY-MM"
};

inline bool valid_month(int m) { return m >= 1 && m <= 12; }

// Monthly series with explicit gaps. Keys are strictly increasing by
// construction (std::map over the serial index).
class MonthlySeries {
public:
    void set(YearMonth ym, double value) {
        if (!valid_month(ym.month)) throw std::invalid_argument("month out of range: " + std::to_string(ym.month));
        values_[ym.serial()] = value;
    }
    // Insert that refuses duplicates: used by CSV loaders.
    void insert_unique(YearMonth ym, double value) {
        if (!valid_month(ym.month)) throw std::invalid_argument("month out of range: " + std::to_string(ym.month));
        auto [it, inserted] = values_.emplace(ym.serial(), value);
        (void)it;
        if (!inserted) throw std::invalid_argument("duplicate month " + ym.str());
    }

    std::optional<double> get(YearMonth ym) const {
        auto it = values_.find(ym.serial());
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }
    bool contains(YearMonth ym) const { return values_.count(ym.serial()) > 0; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    YearMonth first() const {
        if (values_.empty()) throw std::out_of_range("empty series");
        return YearMonth::from_serial(values_.begin()->first);
    }
    YearMonth last() const {
        if (values_.empty()) throw std::out_of_range("empty series");
        return YearMonth::from_serial(values_.rbegin()->first);
    }

    // Observed entries in ascending month order.
    std::vector<std::pair<YearMonth, double>> entries() const {
        std::vector<std::pair<YearMonth, double>> out;
        out.reserve(values_.size());
        for (const auto& [s, v] : values_) out.emplace_back(YearMonth::from_serial(s), v);
        return out;
    }

    bool operator==(const MonthlySeries&) const = default;

private:
    std::map<long, double> values_;
};

// One daily observation; used only as input to the monthly reduction.
struct DailyValue {
    int year = 0;
    int month = 1;
    int day = 1;
    double value = 0.0;
};

}  // namespace raingraph
