#include <catch2/catch_amalgamated.hpp>

#include "sude/verify.hpp"

using namespace sude;

TEST_CASE("every self-verification row passes its pinned tolerance") {
    std::vector<VerifyRow> rows = verify_all();
    CHECK(rows.size() >= 10);
    for (const auto& r : rows) {
        INFO(r.name << ": max_error=" << r.max_error
                    << " tolerance=" << r.tolerance);
        CHECK(r.pass);
        CHECK(r.max_error <= r.tolerance);
    }
}
