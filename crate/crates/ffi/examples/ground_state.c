#include <stdio.h>
#include <stdlib.h>
#include "nelson_ibc.h"

int main(void) {
    NibModel *model = NULL;
    if (nib_model_new("[grid]\nn_radial = 1\nn_angular = 3\n", &model) != NIB_STATUS_OK) {
        fprintf(stderr, "error: %s\n", nib_last_error_message());
        return 1;
    }
    size_t n = 0;
    nib_model_dimension(model, &n);
    double e0 = 0.0;
    double *v = malloc(n * sizeof *v);
    if (nib_model_ground_state(model, &e0, v, n) != NIB_STATUS_OK) {
        fprintf(stderr, "error: %s\n", nib_last_error_message());
        return 1;
    }
    printf("dimension %zu, E0 = %.6f, vacuum amplitude %.6f\n", n, e0, v[0]);
    free(v);
    nib_model_free(model);
    return 0;
}
