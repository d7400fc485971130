#include <stdio.h>

int main(void) {
  int v[8] = {5, 2, 7, 1, 9, 3, 8, 4};
  int count[10] = {0};
  for (int i = 0; i < 8; i++) {
    count[v[i]]++;
  }
  for (int d = 0; d < 10; d++) {
    for (int c = 0; c < count[d]; c++) {
      printf("%d ", d);
    }
  }
  printf("\n");
  return 0;
}
