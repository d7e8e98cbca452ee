#include <stdio.h>
#include "efflab.h"

int main(void) {
    EfflabLattice *l = NULL;
    if (efflab_lattice_binomial(1.0, 2.0, 0.5, 0.5, &l) != EFFLAB_STATUS_OK) return 1;
    double value = 0.0, pi = 0.0;
    if (efflab_solve_utility(l, EFFLAB_UTILITY_LOG, 0.0, 1.0, true, &value, &pi) != EFFLAB_STATUS_OK) return 2;
    EfflabClassification c;
    if (efflab_lattice_classify(l, 1e-9, &c) != EFFLAB_STATUS_OK || !c.consistent) return 3;
    efflab_lattice_free(l);
    if (efflab_lattice_binomial(1.0, 2.0, 0.5, 1.5, &l) != EFFLAB_STATUS_INVALID_ARGUMENT) return 4;
    if (efflab_last_error() == NULL) return 5;
    printf("%.12f\n", pi);
    return 0;
}
