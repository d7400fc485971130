#include <stdio.h>

int main(void) {
  int v[8] = {5, 2, 7, 1, 9, 3, 8, 4};
  int swapped = 1;
  while (swapped) {
    swapped = 0;
    for (int j = 0; j < 7; j++) {
      if (v[j] > v[j + 1]) {
        int t = v[j];
        v[j] = v[j + 1];
        v[j + 1] = t;
        swapped = 1;
      }
    }
  }
  for (int i = 0; i < 8; i++) {
    printf("%d ", v[i]);
  }
  printf("\n");
  return 0;
}
