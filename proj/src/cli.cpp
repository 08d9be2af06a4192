#include "leotrace/cli.hpp"

namespace leotrace::cli {

int run(int, char**) {
    return 0;
}

} // namespace leotrace::cli
