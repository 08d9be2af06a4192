#include "leotrace/cli.hpp"

int main(int argc, char** argv) {
    return leotrace::cli::run(argc, argv);
}
